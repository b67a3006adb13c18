#include "pct/trainer.hpp"

#include "pct/errors.hpp"
#include "pct/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace pct {

namespace {

Tensor scale_by_sizes(const Tensor& local, const std::array<double, 3>& sizes) {
    Tensor out = local;
    for (int i = 0; i < out.rows; ++i)
        for (int c = 0; c < 3; ++c) out(i, c) *= sizes[size_t(c)];
    return out;
}

/// Forward pass for one sample; returns the loss value on the tape.
/// The loss is the Chamfer distance in the world metric: local coordinates
/// are scaled by the voxel sizes, which cancels the shared cell corner.
Value sample_loss(Tape& tape, const ParamBinding& binding, const ModelConfig& cfg,
                  const VoxelSample& sample, const std::array<double, 3>& sizes) {
    EncodeTapeResult enc = encode_on_tape(tape, binding, cfg, sample.local_points, sizes);
    Value recon = decode_on_tape(tape, binding, cfg, enc.code, enc.norm);
    Tensor sizes_row = Tensor::row3(sizes[0], sizes[1], sizes[2]);
    Value recon_world = tape.mul_rowvec(recon, tape.constant(sizes_row));
    return chamfer_loss(tape, scale_by_sizes(sample.local_points, sizes), recon_world);
}

uint64_t emd_stream(const VoxelIndex& idx) {
    uint64_t s = mix_seed(0x656d64, uint64_t(idx.h)); // "emd"
    s = mix_seed(s, uint64_t(idx.w));
    return mix_seed(s, uint64_t(idx.d));
}

/// Per-voxel EMD with both sides capped at 512 points.
double emd_capped(const Tensor& a, const Tensor& b, uint64_t seed) {
    const int cap = 512;
    auto shrink = [&](const Tensor& t, uint64_t stream) {
        if (t.rows <= cap) return t;
        Rng rng(mix_seed(seed, stream));
        std::vector<size_t> keep = rng.sample_without_replacement(size_t(t.rows), size_t(cap));
        std::sort(keep.begin(), keep.end());
        Tensor out(cap, 3);
        for (int i = 0; i < cap; ++i)
            for (int c = 0; c < 3; ++c) out(i, c) = t(int(keep[size_t(i)]), c);
        return out;
    };
    return emd(shrink(a, 1), shrink(b, 2), seed);
}

} // namespace

void TrainConfig::validate() const {
    model.validate();
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(lr >= 0.0)) throw ConfigError("learning_rate must be >= 0");
    if (n_min < 0) throw ConfigError("n_min must be >= 0");
}

std::string TrainLog::to_csv(const std::string& provenance) const {
    std::string out;
    std::istringstream in(provenance);
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) out += "# " + line + "\n";
    out += "epoch,train_cd,test_cd,seconds\n";
    char buf[128];
    for (size_t e = 0; e < epochs.size(); ++e) {
        std::snprintf(buf, sizeof(buf), "%zu,%.10g,%.10g,0\n", e, epochs[e].train_cd,
                      epochs[e].heldout_cd);
        out += buf;
    }
    return out;
}

std::vector<VoxelSample> collect_voxels(const std::vector<PointCloud>& sweeps,
                                        const VoxelSpec& spec, int64_t n_min) {
    std::vector<VoxelSample> samples;
    for (const PointCloud& sweep : sweeps) {
        VoxelizedCloud vc = partition(sweep, spec);
        for (const auto& [idx, cell] : vc.voxels) {
            if (cell.points.rows < n_min) continue;
            LocalVoxel lv = to_local(spec, idx, cell.points);
            samples.push_back({idx, std::move(lv.local_points)});
        }
    }
    return samples;
}

Corpus build_corpus(const std::vector<PointCloud>& train_sweeps,
                    const std::vector<PointCloud>& heldout_sweeps, const VoxelSpec& spec,
                    const TrainConfig& config) {
    config.validate();
    spec.validate();
    Corpus corpus;
    corpus.spec = spec;
    corpus.train = collect_voxels(train_sweeps, spec, config.n_min);
    corpus.heldout = collect_voxels(heldout_sweeps, spec, config.n_min);
    if (corpus.train.empty()) throw DataError("build_corpus: no training voxels with n >= n_min");
    return corpus;
}

double mean_voxel_cd(const Model& model, const std::vector<VoxelSample>& samples,
                     const VoxelSpec& spec) {
    if (samples.empty()) return 0.0;
    std::array<double, 3> sizes = spec.sizes();
    std::vector<double> cds(samples.size());
    parallel_for(int(samples.size()), [&](int i) {
        Tape tape;
        ParamBinding binding = bind_params(tape, model.params);
        Value loss = sample_loss(tape, binding, model.config, samples[size_t(i)], sizes);
        cds[size_t(i)] = tape.value(loss)(0, 0);
    });
    double sum = 0.0;
    for (double c : cds) sum += c;
    return sum / double(samples.size());
}

TrainResult train(const Corpus& corpus, const TrainConfig& config, bool log_to_console) {
    config.validate();
    if (corpus.train.empty()) throw DataError("train: empty corpus");
    std::array<double, 3> sizes = corpus.spec.sizes();

    TrainResult result;
    result.model = init_model(config.model, config.seed);
    AdamState adam;
    adam.cfg.lr = config.lr;
    Rng shuffle_rng(mix_seed(config.seed, 2));

    int n_train = int(corpus.train.size());
    double best_cd = std::numeric_limits<double>::infinity();
    result.best_model = result.model;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        std::vector<int> order(static_cast<size_t>(n_train), 0);
        std::iota(order.begin(), order.end(), 0);
        shuffle_rng.shuffle(order);

        double epoch_loss_sum = 0.0;
        for (int start = 0; start < n_train; start += config.batch_size) {
            int count = std::min(config.batch_size, n_train - start);
            std::vector<int> ids(order.begin() + start, order.begin() + start + count);
            // Reduction order is fixed by corpus index, not shuffle order.
            std::sort(ids.begin(), ids.end());

            std::vector<double> losses(static_cast<size_t>(count), 0.0);
            std::vector<std::map<std::string, Tensor>> grads{static_cast<size_t>(count)};
            parallel_for(count, [&](int i) {
                Tape tape;
                ParamBinding binding = bind_params(tape, result.model.params);
                Value loss = sample_loss(tape, binding, config.model,
                                         corpus.train[size_t(ids[size_t(i)])], sizes);
                losses[size_t(i)] = tape.value(loss)(0, 0);
                tape.backward(loss);
                grads[size_t(i)] = collect_grads(tape, binding);
            });

            std::map<std::string, Tensor> grad_sum = std::move(grads[0]);
            double loss_sum = losses[0];
            for (int i = 1; i < count; ++i) {
                loss_sum += losses[size_t(i)];
                for (auto& [name, g] : grad_sum) {
                    const Tensor& gi = grads[size_t(i)].at(name);
                    for (size_t s = 0; s < g.data.size(); ++s) g.data[s] += gi.data[s];
                }
            }
            if (!std::isfinite(loss_sum))
                throw DataError("train: non-finite loss at epoch " + std::to_string(epoch) +
                                ", batch " + std::to_string(start / config.batch_size));
            double inv = 1.0 / double(count);
            for (auto& [name, g] : grad_sum)
                for (double& v : g.data) v *= inv;
            adam_step(result.model.params, grad_sum, adam);
            epoch_loss_sum += loss_sum;
        }

        EpochStats stats;
        stats.train_cd = epoch_loss_sum / double(n_train);
        stats.heldout_cd = mean_voxel_cd(result.model, corpus.heldout, corpus.spec);
        stats.seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.log.epochs.push_back(stats);
        if (!corpus.heldout.empty() && stats.heldout_cd < best_cd) {
            best_cd = stats.heldout_cd;
            result.best_model = result.model;
            result.best_epoch = epoch;
        }
        if (log_to_console)
            std::fprintf(stderr, "epoch %d: train_cd %.6g, heldout_cd %.6g (%.2fs)\n", epoch,
                         stats.train_cd, stats.heldout_cd, stats.seconds);
    }
    if (corpus.heldout.empty()) {
        result.best_model = result.model;
        result.best_epoch = config.epochs - 1;
    }
    return result;
}

MetricsReport evaluate_sweep(const Model& model, const PointCloud& cloud, const VoxelSpec& spec,
                             int64_t n_min, RatioAccounting accounting) {
    if (cloud.size() == 0) throw DataError("evaluate_sweep: empty sweep");
    CodecResult codec = codec_roundtrip(model, cloud, spec, n_min);

    MetricsReport report;
    report.original_points = cloud.size();
    report.reconstructed_points = codec.reconstruction.size();
    report.cd = chamfer(cloud.points, codec.reconstruction.points);
    NnStats stats = nn_stats(cloud.points, codec.reconstruction.points);
    report.mean = stats.mean;
    report.variance = stats.variance;
    report.mse = stats.mse;

    // Per-voxel EMD, averaged over all voxels; bypassed voxels reconstruct
    // exactly and contribute 0.
    std::vector<const VoxelCode*> encoded;
    for (const VoxelCode& vc : codec.stream.voxels)
        if (!vc.bypass) encoded.push_back(&vc);
    std::vector<double> emds(encoded.size());
    parallel_for(int(encoded.size()), [&](int i) {
        const VoxelIndex& idx = encoded[size_t(i)]->index;
        emds[size_t(i)] = emd_capped(codec.original_by_voxel.at(idx),
                                     codec.recon_by_voxel.at(idx), emd_stream(idx));
    });
    double emd_sum = 0.0;
    for (double e : emds) emd_sum += e;
    size_t voxel_count = codec.stream.voxels.size();
    report.emd = voxel_count == 0 ? 0.0 : emd_sum / double(voxel_count);

    report.compression_ratio = compression_ratio(model.config.code_len, codec.encoded_voxels,
                                                 codec.bypass_points, cloud.size(), accounting);
    return report;
}

MetricsReport aggregate_reports(const std::vector<MetricsReport>& reports) {
    MetricsReport agg;
    if (reports.empty()) return agg;
    for (const MetricsReport& r : reports) {
        agg.emd += r.emd;
        agg.cd += r.cd;
        agg.mean += r.mean;
        agg.variance += r.variance;
        agg.mse += r.mse;
        agg.compression_ratio += r.compression_ratio;
        agg.original_points += r.original_points;
        agg.reconstructed_points += r.reconstructed_points;
    }
    double inv = 1.0 / double(reports.size());
    agg.emd *= inv;
    agg.cd *= inv;
    agg.mean *= inv;
    agg.variance *= inv;
    agg.mse *= inv;
    agg.compression_ratio *= inv;
    return agg;
}

} // namespace pct
