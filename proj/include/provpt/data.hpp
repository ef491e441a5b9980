#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "provpt/prompt_engine.hpp"
#include "provpt/vit.hpp"

namespace provpt {

// Split tags in storage order.
enum : uint8_t { kSplitTrain = 0, kSplitVal = 1, kSplitTest = 2 };

struct Dataset {
    int64_t count = 0;
    int32_t height = 0;
    int32_t width = 0;
    int32_t channels = 1;
    int32_t num_classes = 0;
    std::vector<float> images;   // count*height*width*channels, row-major
    std::vector<uint32_t> labels;
    std::vector<uint8_t> split;

    std::vector<int64_t> indices_of(uint8_t tag) const;
    // Assemble a f64 batch from sample indices (single channel).
    Batch make_batch(const std::vector<int64_t>& idx) const;
    void validate() const;
};

// "PVDS" binary container. Bit-exact round trip; parse errors carry the byte
// offset of the failure.
Dataset load_dataset(const std::string& path);
void save_dataset(const std::string& path, const Dataset& ds);

struct NormalizationPreset {
    std::string name;
    std::vector<double> mean;  // per channel
    std::vector<double> std;   // per channel, > 0
};

NormalizationPreset normalization_preset(const std::string& name, int channels);
// (x - mean) / std per channel, in place on a dataset copy.
void normalize(Dataset& ds, const NormalizationPreset& preset);
// In-place on a f64 image batch [B, H, W] (single channel).
void normalize(Tensor& images, const NormalizationPreset& preset);

// Synthetic classification task whose label is only recoverable by injecting
// a prompt token at one specific block. The generator hand-constructs the
// frozen backbone: value projections transmit only a staging subspace that no
// patch or class token ever produces, and only the sensitive block's queries
// and keys read the class-signal coordinates, so the promptless model's class
// token is a constant and accuracy is exactly chance.
struct SyntheticTaskConfig {
    int num_blocks = 6;
    int sensitive_block = 3;  // 1-based
    int train_size = 512;
    int val_size = 128;
    int test_size = 384;
    uint64_t seed = 0;

    // Signal shaping. signal is the class-coordinate amplitude, cross the
    // cross-class interference, jitter the per-patch amplitude noise, texture
    // the label-independent pixel noise. The defaults put a small prompt
    // budget at the sensitive block in the mid-accuracy regime while a
    // concentrated budget saturates, so placement quality is measurable.
    double signal = 1.4;
    double cross = 0.55;
    double jitter = 0.5;
    double texture = 0.7;
};

struct SyntheticTask {
    VitModel model;  // constructed backbone; head is left zeroed for the trainer
    Dataset dataset;
    SyntheticTaskConfig cfg;
};

SyntheticTask make_block_sensitive_task(const SyntheticTaskConfig& cfg);

// Certificate oracle: tune `budget` prompts concentrated at each block in
// turn (prompts + head, fixed-LR SGD) and report final train-probe accuracy
// per block, plus the uniform-placement baseline.
struct PlacementSweep {
    std::vector<double> per_block;  // accuracy with the budget at block i+1
    double uniform = 0.0;           // accuracy with the budget spread uniformly
    double zero_budget = 0.0;       // head-only accuracy
};
PlacementSweep placement_sweep(const SyntheticTask& task, int budget, int epochs,
                               double learning_rate, uint64_t seed);

// True iff the sweep puts the strict maximum at the sensitive block and
// concentrated placement strictly beats uniform placement.
bool check_certificate(const SyntheticTask& task, const PlacementSweep& sweep);

}  // namespace provpt
