#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "provpt/prompt.hpp"
#include "provpt/tensor.hpp"
#include "provpt/vit.hpp"

namespace provpt {

// "PVPT" weight container: magic, u32 version, then length-prefixed named f64
// arrays. Bit-exact round trip.
struct ArrayStore {
    // insertion-ordered names with payloads
    std::vector<std::pair<std::string, Tensor>> arrays;

    void put(const std::string& name, const Tensor& t);
    const Tensor* find(const std::string& name) const;
    const Tensor& get(const std::string& name) const;
};

void save_store(const std::string& path, const ArrayStore& store);
ArrayStore load_store(const std::string& path);

// Model <-> store: "vit.config" holds the dimensions, "vit.<name>" the weights.
void put_model(ArrayStore& store, const VitModel& model);
VitModel get_model(const ArrayStore& store);

// One metrics row per epoch. Doubles are rendered with 9 significant digits;
// absent relocation fields are empty.
struct MetricsRow {
    int epoch = 0;
    double train_loss = 0.0;
    double probe_loss = 0.0;
    double eval_acc = 0.0;
    bool relocated = false;
    std::optional<int64_t> k_star;
    std::optional<int> source;
    std::optional<int> target;
    std::optional<double> reward;
};

std::string format_metrics_csv(const std::vector<MetricsRow>& rows);
void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> read_metrics_csv(const std::string& path);

// Distribution history: JSON lines, one record per epoch.
struct HistoryRecord {
    int epoch = 0;
    std::vector<int> assignments;
    std::optional<double> max_idleness;
    std::optional<RelocationEvent> event;
    // adding-strategy events live beside `event` so the relocation schema
    // stays exactly {epoch, assignments, event}
    struct Add {
        int64_t index = -1;
        int target_block = 0;
        double reward = 0.0;
    };
    std::optional<Add> add;
};

std::string format_history_jsonl(const std::vector<HistoryRecord>& records);
void write_history_jsonl(const std::string& path, const std::vector<HistoryRecord>& records);
std::vector<HistoryRecord> read_history_jsonl(const std::string& path);

struct RunManifest {
    std::string version;
    uint64_t seed = 0;
    std::map<std::string, std::string> config;     // flattened config snapshot
    std::map<std::string, std::string> artifacts;  // name -> path
    std::map<std::string, double> phase_seconds;   // score/prune/allocate/tune/reward
    double wall_seconds = 0.0;
};

void write_manifest(const std::string& path, const RunManifest& m);
RunManifest read_manifest(const std::string& path);

// %.9g formatting shared by every artifact writer.
std::string format_g9(double v);

}  // namespace provpt
