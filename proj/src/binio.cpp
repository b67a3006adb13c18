#include "pct/binio.hpp"

#include <cstdio>
#include <memory>

namespace pct::binio {

std::vector<uint8_t> read_file(const std::string& path) {
    std::unique_ptr<FILE, int (*)(FILE*)> f(std::fopen(path.c_str(), "rb"), &std::fclose);
    if (!f) throw DataError("cannot open " + path);
    std::fseek(f.get(), 0, SEEK_END);
    long size = std::ftell(f.get());
    if (size < 0) throw DataError("cannot stat " + path);
    std::fseek(f.get(), 0, SEEK_SET);
    std::vector<uint8_t> bytes(static_cast<size_t>(size), 0);
    if (size > 0 && std::fread(bytes.data(), 1, size_t(size), f.get()) != size_t(size))
        throw DataError("short read on " + path);
    return bytes;
}

void write_file(const std::string& path, const std::vector<uint8_t>& bytes) {
    std::unique_ptr<FILE, int (*)(FILE*)> f(std::fopen(path.c_str(), "wb"), &std::fclose);
    if (!f) throw DataError("cannot open " + path + " for writing");
    if (!bytes.empty() && std::fwrite(bytes.data(), 1, bytes.size(), f.get()) != bytes.size())
        throw DataError("short write on " + path);
}

} // namespace pct::binio
