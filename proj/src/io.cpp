#include "provpt/io.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace provpt {

using nlohmann::json;

std::string format_g9(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

void ArrayStore::put(const std::string& name, const Tensor& t) {
    for (auto& [n, existing] : arrays)
        if (n == name) {
            existing = t;
            return;
        }
    arrays.push_back({name, t});
}

const Tensor* ArrayStore::find(const std::string& name) const {
    for (const auto& [n, t] : arrays)
        if (n == name) return &t;
    return nullptr;
}

const Tensor& ArrayStore::get(const std::string& name) const {
    const Tensor* t = find(name);
    if (!t) throw std::runtime_error("ArrayStore: missing array " + name);
    return *t;
}

namespace {
constexpr char kMagic[4] = {'P', 'V', 'P', 'T'};
constexpr uint32_t kVersion = 1;

template <typename T>
void read_or_fail(std::ifstream& f, const std::string& path, T* out, size_t n) {
    const std::streamoff off = f.tellg();
    f.read(reinterpret_cast<char*>(out), static_cast<std::streamsize>(n * sizeof(T)));
    if (!f)
        throw std::runtime_error("load_store: " + path + ": truncated at byte offset " + std::to_string(off));
}
}  // namespace

void save_store(const std::string& path, const ArrayStore& store) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("save_store: cannot open " + path);
    f.write(kMagic, 4);
    f.write(reinterpret_cast<const char*>(&kVersion), 4);
    const uint64_t count = store.arrays.size();
    f.write(reinterpret_cast<const char*>(&count), 8);
    for (const auto& [name, t] : store.arrays) {
        const uint32_t nl = static_cast<uint32_t>(name.size());
        f.write(reinterpret_cast<const char*>(&nl), 4);
        f.write(name.data(), nl);
        const uint32_t rank = static_cast<uint32_t>(t.shape.size());
        f.write(reinterpret_cast<const char*>(&rank), 4);
        for (int64_t d : t.shape) {
            const uint64_t dd = static_cast<uint64_t>(d);
            f.write(reinterpret_cast<const char*>(&dd), 8);
        }
        const uint64_t n = t.values.size();
        f.write(reinterpret_cast<const char*>(&n), 8);
        f.write(reinterpret_cast<const char*>(t.values.data()), static_cast<std::streamsize>(n * 8));
    }
    if (!f) throw std::runtime_error("save_store: write failed for " + path);
}

ArrayStore load_store(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_store: cannot open " + path);
    char magic[4];
    read_or_fail(f, path, magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("load_store: " + path + ": bad magic (expected PVPT)");
    uint32_t version = 0;
    read_or_fail(f, path, &version, 1);
    if (version != kVersion)
        throw std::runtime_error("load_store: " + path + ": unsupported version " + std::to_string(version));
    uint64_t count = 0;
    read_or_fail(f, path, &count, 1);
    ArrayStore store;
    for (uint64_t i = 0; i < count; ++i) {
        uint32_t nl = 0;
        read_or_fail(f, path, &nl, 1);
        std::string name(nl, '\0');
        read_or_fail(f, path, name.data(), nl);
        uint32_t rank = 0;
        read_or_fail(f, path, &rank, 1);
        std::vector<int64_t> shape(rank);
        for (uint32_t r = 0; r < rank; ++r) {
            uint64_t d = 0;
            read_or_fail(f, path, &d, 1);
            shape[r] = static_cast<int64_t>(d);
        }
        uint64_t n = 0;
        read_or_fail(f, path, &n, 1);
        if (Tensor::numel_of(shape) != static_cast<int64_t>(n))
            throw std::runtime_error("load_store: " + path + ": shape/count mismatch in " + name);
        Tensor t(shape);
        read_or_fail(f, path, t.values.data(), n);
        store.arrays.push_back({std::move(name), std::move(t)});
    }
    return store;
}

void put_model(ArrayStore& store, const VitModel& model) {
    const VitConfig& c = model.cfg;
    Tensor cfg({9}, {static_cast<double>(c.num_blocks), static_cast<double>(c.embed_dim),
                     static_cast<double>(c.num_heads), static_cast<double>(c.patch_size),
                     static_cast<double>(c.image_size), static_cast<double>(c.num_classes),
                     c.mlp_ratio, c.drop_rate, c.ln_eps});
    store.put("vit.config", cfg);
    model.w.for_each_named([&](const std::string& name, const Tensor& t) { store.put("vit." + name, t); });
}

VitModel get_model(const ArrayStore& store) {
    const Tensor& cfg = store.get("vit.config");
    if (cfg.numel() != 9) throw std::runtime_error("get_model: bad vit.config payload");
    VitModel m;
    m.cfg.num_blocks = static_cast<int>(cfg.values[0]);
    m.cfg.embed_dim = static_cast<int>(cfg.values[1]);
    m.cfg.num_heads = static_cast<int>(cfg.values[2]);
    m.cfg.patch_size = static_cast<int>(cfg.values[3]);
    m.cfg.image_size = static_cast<int>(cfg.values[4]);
    m.cfg.num_classes = static_cast<int>(cfg.values[5]);
    m.cfg.mlp_ratio = cfg.values[6];
    m.cfg.drop_rate = cfg.values[7];
    m.cfg.ln_eps = cfg.values[8];
    m.cfg.validate();
    m.w = VitWeights::zeros(m.cfg);
    m.w.for_each_named([&](const std::string& name, Tensor& t) {
        const Tensor& src = store.get("vit." + name);
        if (src.shape != t.shape) throw std::runtime_error("get_model: shape mismatch for " + name);
        t.values = src.values;
    });
    return m;
}

// --------------------------------------------------------------------------

std::string format_metrics_csv(const std::vector<MetricsRow>& rows) {
    std::ostringstream out;
    out << "epoch,train_loss,probe_loss,eval_acc,relocated,k_star,source,target,reward\n";
    for (const MetricsRow& r : rows) {
        out << r.epoch << ',' << format_g9(r.train_loss) << ',' << format_g9(r.probe_loss) << ','
            << format_g9(r.eval_acc) << ',' << (r.relocated ? 1 : 0) << ',';
        if (r.k_star) out << *r.k_star;
        out << ',';
        if (r.source) out << *r.source;
        out << ',';
        if (r.target) out << *r.target;
        out << ',';
        if (r.reward) out << format_g9(*r.reward);
        out << '\n';
    }
    return out.str();
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("write_metrics_csv: cannot open " + path);
    f << format_metrics_csv(rows);
    if (!f) throw std::runtime_error("write_metrics_csv: write failed for " + path);
}

std::vector<MetricsRow> read_metrics_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("read_metrics_csv: cannot open " + path);
    std::string line;
    if (!std::getline(f, line)) throw std::runtime_error("read_metrics_csv: empty file " + path);
    if (line != "epoch,train_loss,probe_loss,eval_acc,relocated,k_star,source,target,reward")
        throw std::runtime_error("read_metrics_csv: unexpected header in " + path);
    std::vector<MetricsRow> rows;
    int lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        while (cells.size() < 9) cells.push_back("");
        if (cells.size() != 9)
            throw std::runtime_error("read_metrics_csv: bad column count at line " + std::to_string(lineno));
        MetricsRow r;
        r.epoch = std::stoi(cells[0]);
        r.train_loss = std::stod(cells[1]);
        r.probe_loss = std::stod(cells[2]);
        r.eval_acc = std::stod(cells[3]);
        r.relocated = cells[4] == "1";
        if (!cells[5].empty()) r.k_star = std::stoll(cells[5]);
        if (!cells[6].empty()) r.source = std::stoi(cells[6]);
        if (!cells[7].empty()) r.target = std::stoi(cells[7]);
        if (!cells[8].empty()) r.reward = std::stod(cells[8]);
        rows.push_back(r);
    }
    return rows;
}

// --------------------------------------------------------------------------

namespace {

json event_to_json(const RelocationEvent& e) {
    return json{{"pruned_index", e.pruned_index},
                {"source_block", e.source_block},
                {"target_block", e.target_block},
                {"idleness", e.idleness},
                {"loss_before", e.loss_before},
                {"loss_after_tuning", e.loss_after_tuning},
                {"approx_reward", e.approx_reward}};
}

RelocationEvent event_from_json(const json& j) {
    RelocationEvent e;
    e.pruned_index = j.at("pruned_index").get<int64_t>();
    e.source_block = j.at("source_block").get<int>();
    e.target_block = j.at("target_block").get<int>();
    e.idleness = j.at("idleness").get<double>();
    e.loss_before = j.at("loss_before").get<double>();
    e.loss_after_tuning = j.at("loss_after_tuning").get<double>();
    e.approx_reward = j.at("approx_reward").get<double>();
    return e;
}

}  // namespace

std::string format_history_jsonl(const std::vector<HistoryRecord>& records) {
    std::ostringstream out;
    for (const HistoryRecord& r : records) {
        json j;
        j["epoch"] = r.epoch;
        j["assignments"] = r.assignments;
        j["max_idleness"] = r.max_idleness ? json(*r.max_idleness) : json(nullptr);
        j["event"] = r.event ? event_to_json(*r.event) : json(nullptr);
        if (r.add)
            j["add"] = json{{"index", r.add->index}, {"target_block", r.add->target_block}, {"reward", r.add->reward}};
        out << j.dump() << '\n';
    }
    return out.str();
}

void write_history_jsonl(const std::string& path, const std::vector<HistoryRecord>& records) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("write_history_jsonl: cannot open " + path);
    f << format_history_jsonl(records);
    if (!f) throw std::runtime_error("write_history_jsonl: write failed for " + path);
}

std::vector<HistoryRecord> read_history_jsonl(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("read_history_jsonl: cannot open " + path);
    std::vector<HistoryRecord> out;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw std::runtime_error("read_history_jsonl: " + path + " line " + std::to_string(lineno) + ": " + e.what());
        }
        HistoryRecord r;
        r.epoch = j.at("epoch").get<int>();
        r.assignments = j.at("assignments").get<std::vector<int>>();
        if (j.contains("max_idleness") && !j["max_idleness"].is_null())
            r.max_idleness = j["max_idleness"].get<double>();
        if (j.contains("event") && !j["event"].is_null()) r.event = event_from_json(j["event"]);
        if (j.contains("add") && !j["add"].is_null()) {
            HistoryRecord::Add a;
            a.index = j["add"].at("index").get<int64_t>();
            a.target_block = j["add"].at("target_block").get<int>();
            a.reward = j["add"].at("reward").get<double>();
            r.add = a;
        }
        out.push_back(std::move(r));
    }
    return out;
}

// --------------------------------------------------------------------------

void write_manifest(const std::string& path, const RunManifest& m) {
    for (const auto& [name, p] : m.artifacts)
        if (!std::filesystem::exists(p))
            throw std::runtime_error("write_manifest: artifact " + name + " missing at " + p);
    json j;
    j["version"] = m.version;
    j["seed"] = m.seed;
    j["config"] = m.config;
    j["artifacts"] = m.artifacts;
    j["phase_seconds"] = m.phase_seconds;
    j["wall_seconds"] = m.wall_seconds;
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("write_manifest: cannot open " + path);
    f << j.dump(2) << '\n';
}

RunManifest read_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("read_manifest: cannot open " + path);
    json j = json::parse(f);
    RunManifest m;
    m.version = j.at("version").get<std::string>();
    m.seed = j.at("seed").get<uint64_t>();
    m.config = j.at("config").get<std::map<std::string, std::string>>();
    m.artifacts = j.at("artifacts").get<std::map<std::string, std::string>>();
    m.phase_seconds = j.at("phase_seconds").get<std::map<std::string, double>>();
    m.wall_seconds = j.at("wall_seconds").get<double>();
    return m;
}

}  // namespace provpt

