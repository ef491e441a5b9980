#include "provpt/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "provpt/nn.hpp"

namespace provpt {

std::vector<int64_t> Dataset::indices_of(uint8_t tag) const {
    std::vector<int64_t> out;
    for (int64_t i = 0; i < count; ++i)
        if (split[static_cast<size_t>(i)] == tag) out.push_back(i);
    return out;
}

Batch Dataset::make_batch(const std::vector<int64_t>& idx) const {
    if (channels != 1) throw std::invalid_argument("Dataset::make_batch: single-channel only");
    const int64_t b = static_cast<int64_t>(idx.size());
    Batch out;
    out.images = Tensor({b, height, width});
    out.labels.resize(static_cast<size_t>(b));
    const int64_t hw = static_cast<int64_t>(height) * width;
    for (int64_t i = 0; i < b; ++i) {
        const int64_t s = idx[static_cast<size_t>(i)];
        const float* src = images.data() + s * hw;
        double* dst = out.images.values.data() + i * hw;
        for (int64_t j = 0; j < hw; ++j) dst[j] = static_cast<double>(src[j]);
        out.labels[static_cast<size_t>(i)] = static_cast<int>(labels[static_cast<size_t>(s)]);
    }
    return out;
}

void Dataset::validate() const {
    const size_t n = static_cast<size_t>(count);
    if (labels.size() != n || split.size() != n)
        throw std::runtime_error("Dataset: label/split arrays do not match sample count");
    if (images.size() != n * static_cast<size_t>(height) * static_cast<size_t>(width) * static_cast<size_t>(channels))
        throw std::runtime_error("Dataset: image array size mismatch");
    for (uint32_t l : labels)
        if (l >= static_cast<uint32_t>(num_classes)) throw std::runtime_error("Dataset: label out of range");
    for (uint8_t s : split)
        if (s > kSplitTest) throw std::runtime_error("Dataset: bad split tag");
}

namespace {

constexpr char kMagic[4] = {'P', 'V', 'D', 'S'};
constexpr uint32_t kVersion = 1;

[[noreturn]] void parse_fail(const std::string& path, std::streamoff off, const std::string& what) {
    throw std::runtime_error("load_dataset: " + path + ": " + what + " at byte offset " + std::to_string(off));
}

template <typename T>
void read_raw(std::ifstream& f, const std::string& path, T* out, size_t n) {
    const std::streamoff off = f.tellg();
    f.read(reinterpret_cast<char*>(out), static_cast<std::streamsize>(n * sizeof(T)));
    if (!f) parse_fail(path, off, "truncated read of " + std::to_string(n * sizeof(T)) + " bytes");
}

template <typename T>
void write_raw(std::ofstream& f, const T* data, size_t n) {
    f.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(T)));
}

}  // namespace

Dataset load_dataset(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_dataset: cannot open " + path);
    char magic[4];
    read_raw(f, path, magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) parse_fail(path, 0, "bad magic (expected PVDS)");
    uint32_t version = 0;
    read_raw(f, path, &version, 1);
    if (version != kVersion) parse_fail(path, 4, "unsupported version " + std::to_string(version));
    uint64_t m = 0;
    uint32_t dims[4];
    read_raw(f, path, &m, 1);
    read_raw(f, path, dims, 4);
    Dataset ds;
    ds.count = static_cast<int64_t>(m);
    ds.height = static_cast<int32_t>(dims[0]);
    ds.width = static_cast<int32_t>(dims[1]);
    ds.channels = static_cast<int32_t>(dims[2]);
    ds.num_classes = static_cast<int32_t>(dims[3]);
    if (ds.count < 0 || ds.height <= 0 || ds.width <= 0 || ds.channels <= 0 || ds.num_classes <= 0)
        parse_fail(path, 8, "non-positive header dimension");
    const size_t n_img = static_cast<size_t>(m) * static_cast<size_t>(ds.height) *
                         static_cast<size_t>(ds.width) * static_cast<size_t>(ds.channels);
    ds.images.resize(n_img);
    read_raw(f, path, ds.images.data(), n_img);
    ds.labels.resize(static_cast<size_t>(m));
    read_raw(f, path, ds.labels.data(), static_cast<size_t>(m));
    ds.split.resize(static_cast<size_t>(m));
    read_raw(f, path, ds.split.data(), static_cast<size_t>(m));
    ds.validate();
    return ds;
}

void save_dataset(const std::string& path, const Dataset& ds) {
    ds.validate();
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("save_dataset: cannot open " + path);
    write_raw(f, kMagic, 4);
    write_raw(f, &kVersion, 1);
    const uint64_t m = static_cast<uint64_t>(ds.count);
    const uint32_t dims[4] = {static_cast<uint32_t>(ds.height), static_cast<uint32_t>(ds.width),
                              static_cast<uint32_t>(ds.channels), static_cast<uint32_t>(ds.num_classes)};
    write_raw(f, &m, 1);
    write_raw(f, dims, 4);
    write_raw(f, ds.images.data(), ds.images.size());
    write_raw(f, ds.labels.data(), ds.labels.size());
    write_raw(f, ds.split.data(), ds.split.size());
    if (!f) throw std::runtime_error("save_dataset: write failed for " + path);
}

NormalizationPreset normalization_preset(const std::string& name, int channels) {
    NormalizationPreset p;
    p.name = name;
    if (name == "inception") {
        p.mean.assign(static_cast<size_t>(channels), 0.5);
        p.std.assign(static_cast<size_t>(channels), 0.5);
    } else if (name == "imagenet") {
        if (channels == 3) {
            p.mean = {0.485, 0.456, 0.406};
            p.std = {0.229, 0.224, 0.225};
        } else {
            // community constants are RGB; collapse to their average for other widths
            p.mean.assign(static_cast<size_t>(channels), 0.449);
            p.std.assign(static_cast<size_t>(channels), 0.226);
        }
    } else if (name == "none") {
        p.mean.assign(static_cast<size_t>(channels), 0.0);
        p.std.assign(static_cast<size_t>(channels), 1.0);
    } else {
        throw std::invalid_argument("unknown normalization preset: " + name);
    }
    return p;
}

void normalize(Dataset& ds, const NormalizationPreset& preset) {
    if (static_cast<int>(preset.mean.size()) != ds.channels)
        throw std::invalid_argument("normalize: preset channel count mismatch");
    for (double s : preset.std)
        if (s <= 0.0) throw std::invalid_argument("normalize: std must be positive");
    const int64_t c = ds.channels;
    const int64_t per = static_cast<int64_t>(ds.images.size()) / c;
    // channel-last layout
    for (int64_t i = 0; i < per; ++i)
        for (int64_t ch = 0; ch < c; ++ch) {
            float& v = ds.images[static_cast<size_t>(i * c + ch)];
            v = static_cast<float>((static_cast<double>(v) - preset.mean[static_cast<size_t>(ch)]) /
                                   preset.std[static_cast<size_t>(ch)]);
        }
}

void normalize(Tensor& images, const NormalizationPreset& preset) {
    if (preset.mean.size() != 1)
        throw std::invalid_argument("normalize: batch form expects a single-channel preset");
    const double m = preset.mean[0];
    const double inv = 1.0 / preset.std[0];
    for (double& v : images.values) v = (v - m) * inv;
}

// ---------------------------------------------------------------------------
// Block-sensitive synthetic task
// ---------------------------------------------------------------------------
//
// Embedding coordinate map (d = 32):
//   0..3   class-signal coordinates, one per class
//   4,5    class-token flag pair (+chi, -chi); read as the zero-sum (e4 - e5)
//   8..11  staging subspace M: the only content value projections transmit
//   12..31 filler/texture
//
// Every constructed read vector (Q/K/V columns, MLP input columns) sums to
// zero, so the -mu/sigma term layer norm spreads uniformly over coordinates
// cancels exactly and the promptless class token stays constant for every
// input. Class information enters the class token only through attention at
// the sensitive block, where patch keys/queries read the class coordinates
// and a prompt token supplies the value content.

// Gate strength at non-sensitive blocks relative to the sensitive one.
// Mutable for calibration probes; the shipped default is part of the task.
double g_gate_leak = 0.35;

namespace {

constexpr int kDim = 32;
constexpr int kHeads = 2;
constexpr int kClasses = 4;
constexpr int kPatch = 4;
constexpr int kImage = 16;
constexpr int kPixels = kPatch * kPatch;  // 16

constexpr int kClassCoord = 0;   // ..3
constexpr int kFlagPos = 4;
constexpr int kFlagNeg = 5;
constexpr int kStage = 8;        // ..11
constexpr int kFiller = 12;      // ..31

// Gate strengths.
constexpr double kThetaE = 1.0;     // pixel pattern -> class coordinate
constexpr double kThetaQ = 2.0;     // cls flag -> gate query
constexpr double kThetaK = 1.2;     // class coords -> gate key
constexpr double kThetaPQ = 1.6;    // class coords -> patch query
constexpr double kThetaCK = 1.2;    // flag -> aux key
constexpr double kThetaV = 1.0;   // staging read
constexpr double kThetaO = 1.0;   // staging write
constexpr double kChi = 1.0;      // cls flag magnitude

// head sign patterns over the 4 class coordinates
constexpr double kBeta[kHeads][kClasses] = {{1, 1, -1, -1}, {1, -1, 1, -1}};

void set_col(Tensor& w, int col, const std::vector<std::pair<int, double>>& entries) {
    for (const auto& [row, v] : entries) w.at(row, col) = v;
}

// Orthonormal pixel basis via Gram-Schmidt over a seeded random matrix.
std::vector<std::vector<double>> pixel_basis(Rng& rng) {
    std::vector<std::vector<double>> basis(kPixels, std::vector<double>(kPixels));
    for (auto& v : basis)
        for (double& x : v) x = rng.normal();
    for (int i = 0; i < kPixels; ++i) {
        for (int j = 0; j < i; ++j) {
            double dot = 0.0;
            for (int p = 0; p < kPixels; ++p) dot += basis[i][p] * basis[j][p];
            for (int p = 0; p < kPixels; ++p) basis[i][p] -= dot * basis[j][p];
        }
        double norm = 0.0;
        for (double x : basis[i]) norm += x * x;
        norm = std::sqrt(norm);
        for (double& x : basis[i]) x /= norm;
    }
    return basis;
}

// Zero-sum random read vector over the filler coordinates.
std::vector<std::pair<int, double>> filler_read(Rng& rng, double scale) {
    std::vector<std::pair<int, double>> out;
    double sum = 0.0;
    std::vector<double> vals(kDim - kFiller);
    for (double& v : vals) {
        v = scale * rng.normal();
        sum += v;
    }
    const double mean = sum / static_cast<double>(vals.size());
    for (size_t i = 0; i < vals.size(); ++i) out.push_back({kFiller + static_cast<int>(i), vals[i] - mean});
    return out;
}

}  // namespace

SyntheticTask make_block_sensitive_task(const SyntheticTaskConfig& tcfg) {
    if (tcfg.sensitive_block < 1 || tcfg.sensitive_block > tcfg.num_blocks)
        throw std::invalid_argument("make_block_sensitive_task: sensitive block out of range");
    Rng rng(tcfg.seed);
    Rng wrng = rng.stream("backbone");
    Rng drng = rng.stream("dataset");

    VitConfig cfg;
    cfg.num_blocks = tcfg.num_blocks;
    cfg.embed_dim = kDim;
    cfg.num_heads = kHeads;
    cfg.patch_size = kPatch;
    cfg.image_size = kImage;
    cfg.num_classes = kClasses;
    cfg.mlp_ratio = 2.0;
    cfg.validate();

    VitWeights w = VitWeights::zeros(cfg);
    const int hd = cfg.head_dim();

    const std::vector<std::vector<double>> basis = pixel_basis(wrng);

    // Patch embedding: columns 0..3 read the class pixel patterns; filler
    // columns take small random pixel reads for texture. Flag and staging
    // columns stay exactly zero.
    for (int c = 0; c < kClasses; ++c)
        for (int p = 0; p < kPixels; ++p) w.patch_w.at(p, kClassCoord + c) = kThetaE * basis[static_cast<size_t>(c)][static_cast<size_t>(p)];
    for (int col = kFiller; col < kDim; ++col)
        for (int p = 0; p < kPixels; ++p) w.patch_w.at(p, col) = 0.15 * wrng.normal();

    // Position encodings and class token: filler-only texture plus the flag pair.
    for (int64_t i = 0; i < w.pos.shape[0]; ++i)
        for (int col = kFiller; col < kDim; ++col) w.pos.at(i, col) = 0.1 * wrng.normal();
    w.cls.values[kFlagPos] = kChi;
    w.cls.values[kFlagNeg] = -kChi;
    for (int col = kFiller; col < kDim; ++col) w.cls.values[static_cast<size_t>(col)] = 0.1 * wrng.normal();

    for (int bi = 0; bi < cfg.num_blocks; ++bi) {
        BlockWeights& b = w.blocks[static_cast<size_t>(bi)];
        // Every block carries the gate wiring; the sensitive block at full
        // strength, the rest attenuated. Prompts are mildly useful anywhere
        // (no dead optimization basin) but the sensitive block dominates.
        const double f = bi + 1 == tcfg.sensitive_block ? 1.0 : g_gate_leak;
        for (int h = 0; h < kHeads; ++h) {
            const int col0 = h * hd + 0;  // gate channel
            const int col1 = h * hd + 1;  // aux channel
            set_col(b.wq, col0, {{kFlagPos, f * kThetaQ}, {kFlagNeg, -f * kThetaQ}});
            std::vector<std::pair<int, double>> classes0, classes1;
            for (int c = 0; c < kClasses; ++c) {
                classes0.push_back({kClassCoord + c, f * kThetaK * kBeta[h][c]});
                classes1.push_back({kClassCoord + c, f * kThetaPQ * kBeta[h][c]});
            }
            set_col(b.wk, col0, classes0);
            set_col(b.wq, col1, classes1);
            set_col(b.wk, col1, {{kFlagPos, f * kThetaCK}, {kFlagNeg, -f * kThetaCK}});
            // Staging transport, identical in every block: value channels read
            // zero-sum differences of the staging coordinates, the output
            // projection writes them back into staging.
            for (int t = 0; t < 3; ++t) {
                const int vc = h * hd + 2 + t;
                set_col(b.wv, vc, {{kStage + t, kThetaV}, {kStage + t + 1, -kThetaV}});
                b.wo.at(vc, kStage + t) = kThetaO;
            }
        }
        // MLP: zero-sum filler reads, filler writes; inert for the gate but
        // keeps the blocks from being pure pass-throughs.
        for (int cmid = 0; cmid < cfg.mlp_dim(); ++cmid) {
            set_col(b.w1, cmid, filler_read(wrng, 0.2));
            b.b1.values[static_cast<size_t>(cmid)] = 0.1 * wrng.normal();
        }
        for (int cmid = 0; cmid < cfg.mlp_dim(); ++cmid)
            for (int col = kFiller; col < kDim; ++col) b.w2.at(cmid, col) = 0.05 * wrng.normal();
    }

    // Dataset: per sample, patch pixels are built in the orthonormal basis so
    // the class-coordinate content is exact. Class y drives basis vector y
    // with jittered positive amplitude; other class coordinates carry small
    // interference; the remaining basis directions carry texture noise.
    SyntheticTask task;
    task.cfg = tcfg;
    task.model = VitModel{cfg, std::move(w)};

    Dataset& ds = task.dataset;
    ds.count = tcfg.train_size + tcfg.val_size + tcfg.test_size;
    ds.height = kImage;
    ds.width = kImage;
    ds.channels = 1;
    ds.num_classes = kClasses;
    ds.images.assign(static_cast<size_t>(ds.count) * kImage * kImage, 0.0f);
    ds.labels.resize(static_cast<size_t>(ds.count));
    ds.split.resize(static_cast<size_t>(ds.count));

    const int side = kImage / kPatch;
    for (int64_t s = 0; s < ds.count; ++s) {
        const int y = static_cast<int>(s % kClasses);  // balanced splits
        ds.labels[static_cast<size_t>(s)] = static_cast<uint32_t>(y);
        ds.split[static_cast<size_t>(s)] = s < tcfg.train_size ? kSplitTrain
                                           : s < tcfg.train_size + tcfg.val_size ? kSplitVal
                                                                                 : kSplitTest;
        for (int pj = 0; pj < side * side; ++pj) {
            double coeff[kPixels];
            for (int c = 0; c < kClasses; ++c) coeff[c] = tcfg.cross * drng.normal();
            coeff[y] = tcfg.signal * (1.0 + tcfg.jitter * drng.normal());
            for (int m = kClasses; m < kPixels; ++m) coeff[m] = tcfg.texture * drng.normal();
            // pixels of patch pj
            const int pr = pj / side, pc = pj % side;
            for (int u = 0; u < kPatch; ++u)
                for (int v = 0; v < kPatch; ++v) {
                    double val = 0.0;
                    const int pix = u * kPatch + v;
                    for (int m = 0; m < kPixels; ++m) val += coeff[m] * basis[static_cast<size_t>(m)][static_cast<size_t>(pix)];
                    const int row = pr * kPatch + u;
                    const int col = pc * kPatch + v;
                    ds.images[static_cast<size_t>((s * kImage + row) * kImage + col)] = static_cast<float>(val);
                }
        }
    }
    ds.validate();
    return task;
}

PlacementSweep placement_sweep(const SyntheticTask& task, int budget, int epochs,
                               double learning_rate, uint64_t seed) {
    const VitConfig& cfg = task.model.cfg;
    const std::vector<int64_t> train_idx = task.dataset.indices_of(kSplitTrain);
    const std::vector<int64_t> test_idx = task.dataset.indices_of(kSplitTest);
    const Batch train = task.dataset.make_batch(train_idx);
    const Batch test = task.dataset.make_batch(test_idx);

    auto tune = [&](const Distribution& dist, int n_prompts) {
        Rng rng(seed);
        VitModel model = task.model;  // value copy; head trains per placement
        model.w.freeze_backbone();
        Rng hrng = rng.stream("head");
        xavier_uniform(model.w.head_w, cfg.embed_dim, cfg.num_classes, hrng);
        PromptSet prompts(n_prompts, cfg.embed_dim);
        Rng prng = rng.stream("prompts");
        prompts.init_uniform(prng);
        SgdOptimizer opt(SgdConfig{learning_rate, 0.9, 0.0});
        for (int e = 0; e < epochs; ++e) {
            Tape tape;
            LossForward lf = vit_loss(tape, model, train.images, train.labels, prompts, dist);
            tape.backward(lf.loss);
            if (n_prompts > 0) opt.step("prompts", prompts.values, tape.grad(lf.fwd.prompts));
            opt.step("head_w", model.w.head_w, tape.grad(lf.fwd.head_w));
            opt.step("head_b", model.w.head_b, tape.grad(lf.fwd.head_b));
        }
        return eval_accuracy(model, prompts, dist, test);
    };

    PlacementSweep sweep;
    sweep.per_block.resize(static_cast<size_t>(cfg.num_blocks), 0.0);
    for (int b = 1; b <= cfg.num_blocks; ++b) {
        Distribution dist(budget, cfg.num_blocks);
        for (int k = 0; k < budget; ++k) dist.assignments[static_cast<size_t>(k)] = b;
        sweep.per_block[static_cast<size_t>(b - 1)] = tune(dist, budget);
    }
    sweep.uniform = tune(Distribution::uniform(budget, cfg.num_blocks), budget);
    sweep.zero_budget = tune(Distribution(0, cfg.num_blocks), 0);
    return sweep;
}

bool check_certificate(const SyntheticTask& task, const PlacementSweep& sweep) {
    const int b = task.cfg.sensitive_block;
    const double at_b = sweep.per_block[static_cast<size_t>(b - 1)];
    for (int i = 0; i < static_cast<int>(sweep.per_block.size()); ++i)
        if (i != b - 1 && sweep.per_block[static_cast<size_t>(i)] >= at_b) return false;
    return at_b > sweep.uniform;
}

}  // namespace provpt

