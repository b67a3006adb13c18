#include "pct/runconfig.hpp"

#include "pct/errors.hpp"
#include "pct/kv.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace pct {

namespace {

std::string real_to_string(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

RunConfig RunConfig::defaults() { return RunConfig{}; }

void RunConfig::set(const std::string& key, const std::string& value) {
    if (key == "data_dir") data_dir = value;
    else if (key == "out_dir") out_dir = value;
    else if (key == "model_path") model_path = value;
    else if (key == "train_fraction") train_fraction = kv::to_real(key, value);
    else if (key == "seed") {
        train.seed = uint64_t(kv::to_int(key, value));
        seed = train.seed;
    }
    else if (key == "voxel_h") voxel.h = kv::to_real(key, value);
    else if (key == "voxel_w") voxel.w = kv::to_real(key, value);
    else if (key == "voxel_d") voxel.d = kv::to_real(key, value);
    else if (key == "code_len") train.model.code_len = int(kv::to_int(key, value));
    else if (key == "epochs") train.epochs = int(kv::to_int(key, value));
    else if (key == "batch_size") train.batch_size = int(kv::to_int(key, value));
    else if (key == "learning_rate") train.lr = kv::to_real(key, value);
    else if (key == "n_min") train.n_min = kv::to_int(key, value);
    else if (key == "encoder") {
        if (value == "gin") train.model.encoder = EncoderKind::gin;
        else if (value == "pointnet") train.model.encoder = EncoderKind::pointnet;
        else throw ConfigError("encoder: unknown value \"" + value + "\" (gin|pointnet)");
    }
    else if (key == "decoder") {
        if (value == "fc") train.model.decoder = DecoderKind::fully_connected;
        else if (value == "folding") train.model.decoder = DecoderKind::folding;
        else throw ConfigError("decoder: unknown value \"" + value + "\" (fc|folding)");
    }
    else if (key == "aggregation") {
        if (value == "mean") train.model.aggregation = Aggregation::mean;
        else if (value == "max") train.model.aggregation = Aggregation::max;
        else throw ConfigError("aggregation: unknown value \"" + value + "\" (mean|max)");
    }
    else if (key == "use_norm") train.model.use_norm = kv::to_bool(key, value);
    else if (key == "ks") train.model.ks = kv::to_int_list(key, value);
    else if (key == "graph_frame") {
        if (value == "local") train.model.graph_frame = GraphFrame::local;
        else if (value == "world") train.model.graph_frame = GraphFrame::world;
        else throw ConfigError("graph_frame: unknown value \"" + value + "\" (local|world)");
    }
    else if (key == "ratio_accounting") train.accounting = ratio_accounting_from_string(value);
    else if (key == "fc_points") train.model.fc_points = int(kv::to_int(key, value));
    else if (key == "fold_grid") train.model.fold_grid = int(kv::to_int(key, value));
    else if (key == "branch_hidden") train.model.branch_hidden = int(kv::to_int(key, value));
    else if (key == "branch_out") train.model.branch_out = int(kv::to_int(key, value));
    else if (key == "trunk_widths") train.model.trunk_widths = kv::to_int_list(key, value);
    else throw ConfigError("unknown config key \"" + key + "\"");
}

RunConfig RunConfig::from_text(const std::string& text) {
    RunConfig cfg = defaults();
    for (const auto& [key, value] : kv::parse(text)) cfg.set(key, value);
    cfg.voxel.validate();
    cfg.train.validate();
    if (!(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0))
        throw ConfigError("train_fraction must be in (0, 1)");
    return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::ostringstream text;
    text << in.rdbuf();
    return from_text(text.str());
}

std::string RunConfig::echo() const {
    const ModelConfig& m = train.model;
    std::string s;
    s += "aggregation = " + std::string(m.aggregation == Aggregation::mean ? "mean" : "max") + "\n";
    s += "batch_size = " + std::to_string(train.batch_size) + "\n";
    s += "branch_hidden = " + std::to_string(m.branch_hidden) + "\n";
    s += "branch_out = " + std::to_string(m.branch_out) + "\n";
    s += "code_len = " + std::to_string(m.code_len) + "\n";
    s += "data_dir = " + data_dir + "\n";
    s += "decoder = " + std::string(m.decoder == DecoderKind::fully_connected ? "fc" : "folding") + "\n";
    s += "encoder = " + std::string(m.encoder == EncoderKind::gin ? "gin" : "pointnet") + "\n";
    s += "epochs = " + std::to_string(train.epochs) + "\n";
    s += "fc_points = " + std::to_string(m.fc_points) + "\n";
    s += "fold_grid = " + std::to_string(m.fold_grid) + "\n";
    s += "graph_frame = " + std::string(m.graph_frame == GraphFrame::local ? "local" : "world") + "\n";
    s += "ks = " + kv::int_list_to_string(m.ks) + "\n";
    s += "learning_rate = " + real_to_string(train.lr) + "\n";
    s += "model_path = " + resolved_model_path() + "\n";
    s += "n_min = " + std::to_string(train.n_min) + "\n";
    s += "out_dir = " + out_dir + "\n";
    s += "ratio_accounting = " + to_string(train.accounting) + "\n";
    s += "seed = " + std::to_string(seed) + "\n";
    s += "train_fraction = " + real_to_string(train_fraction) + "\n";
    s += "trunk_widths = " + kv::int_list_to_string(m.trunk_widths) + "\n";
    s += "use_norm = " + std::string(m.use_norm ? "true" : "false") + "\n";
    s += "voxel_d = " + real_to_string(voxel.d) + "\n";
    s += "voxel_h = " + real_to_string(voxel.h) + "\n";
    s += "voxel_w = " + real_to_string(voxel.w) + "\n";
    return s;
}

} // namespace pct
