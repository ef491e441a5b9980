// Command-line entry points: train / sweep / plot / gen-data / verify.
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "provpt/checks.hpp"
#include "provpt/svg.hpp"
#include "provpt/trainer.hpp"

namespace fs = std::filesystem;
using namespace provpt;

namespace {

constexpr const char* kVersion = "provpt 0.1.0";

std::string artifact_root(const std::string& flag_value) {
    if (!flag_value.empty()) return flag_value;
    if (const char* env = std::getenv("PROMPT_RELOC_OUT")) return env;
    return "./runs";
}

// "synthetic:b=3,L=6,seed=0,train=512,..." -> generator config
SyntheticTaskConfig parse_task(const std::string& spec, uint64_t default_seed) {
    SyntheticTaskConfig cfg;
    cfg.seed = default_seed;
    std::string body = spec;
    const size_t colon = spec.find(':');
    if (colon != std::string::npos) {
        if (spec.substr(0, colon) != "synthetic")
            throw CLI::ValidationError("--task", "unknown task family: " + spec.substr(0, colon));
        body = spec.substr(colon + 1);
    } else if (spec != "synthetic") {
        throw CLI::ValidationError("--task", "unknown task: " + spec);
    } else {
        body.clear();
    }
    std::istringstream ss(body);
    std::string kv;
    while (std::getline(ss, kv, ',')) {
        if (kv.empty()) continue;
        const size_t eq = kv.find('=');
        if (eq == std::string::npos) throw CLI::ValidationError("--task", "expected key=value, got " + kv);
        const std::string key = kv.substr(0, eq);
        const std::string val = kv.substr(eq + 1);
        if (key == "b") cfg.sensitive_block = std::stoi(val);
        else if (key == "L") cfg.num_blocks = std::stoi(val);
        else if (key == "seed") cfg.seed = std::stoull(val);
        else if (key == "train") cfg.train_size = std::stoi(val);
        else if (key == "val") cfg.val_size = std::stoi(val);
        else if (key == "test") cfg.test_size = std::stoi(val);
        else if (key == "signal") cfg.signal = std::stod(val);
        else if (key == "cross") cfg.cross = std::stod(val);
        else if (key == "jitter") cfg.jitter = std::stod(val);
        else if (key == "texture") cfg.texture = std::stod(val);
        else throw CLI::ValidationError("--task", "unknown task key: " + key);
    }
    return cfg;
}

struct RunSpec {
    TrainConfig train;
    std::string task = "synthetic:b=3";
    std::string dataset_path;
    std::string backbone_path;
    std::string out;
    std::string name;
    std::string strategy_name = "provpt";
};

void add_train_options(CLI::App* cmd, RunSpec& spec) {
    cmd->add_option("--strategy", spec.strategy_name, "training strategy")
        ->check(CLI::IsMember(strategy_names()))
        ->capture_default_str();
    cmd->add_option("--seed", spec.train.seed, "run seed")->capture_default_str();
    cmd->add_option("--epochs", spec.train.total_epochs, "total training epochs")->capture_default_str();
    cmd->add_option("--batch-size", spec.train.batch_size, "mini-batch size")->capture_default_str();
    cmd->add_option("--lr", spec.train.learning_rate, "fixed learning rate")->capture_default_str();
    cmd->add_option("--momentum", spec.train.momentum, "SGD momentum")->capture_default_str();
    cmd->add_option("--weight-decay", spec.train.weight_decay, "weight decay")->capture_default_str();
    cmd->add_option("--prompts", spec.train.prompts_total, "total prompt count N")->capture_default_str();
    cmd->add_option("--drop-rate", spec.train.drop_rate, "attention/MLP dropout rate")->capture_default_str();
    cmd->add_option("--probe-size", spec.train.probe_batch_size, "probe batch size")->capture_default_str();
    cmd->add_option("--prune-floor", spec.train.prune_floor, "prune_only active floor fraction")
        ->capture_default_str();
    cmd->add_option("--adding-initial", spec.train.adding_initial,
                    "adding strategy: initially active prompts (0 = N/2)")
        ->capture_default_str();
    cmd->add_option("--normalization", spec.train.normalization, "normalization preset")
        ->check(CLI::IsMember(std::vector<std::string>{"inception", "imagenet", "none"}))
        ->capture_default_str();
    cmd->add_flag_callback("--no-rewind", [&spec]() { spec.train.rewind_momentum = false; },
                           "keep a relocated prompt's momentum buffer");
    cmd->add_option("--ppo-update-epochs", spec.train.ppo.update_epochs, "PPO passes per update")
        ->capture_default_str();
    cmd->add_option("--task", spec.task, "synthetic task spec, e.g. synthetic:b=3,L=6")
        ->capture_default_str();
    cmd->add_option("--dataset", spec.dataset_path, "PVDS dataset file (overrides --task data)");
    cmd->add_option("--backbone", spec.backbone_path, "PVPT backbone store (required with --dataset)");
    cmd->add_option("--out", spec.out, "artifact root (default $PROMPT_RELOC_OUT or ./runs)");
    cmd->add_option("--name", spec.name, "run directory name (default <strategy>-s<seed>)");
    cmd->set_config("--config", "", "config file (key=value), flags take precedence");
}

struct PreparedRun {
    VitModel model;
    Dataset dataset;
};

PreparedRun prepare(const RunSpec& spec) {
    PreparedRun p;
    if (!spec.dataset_path.empty()) {
        if (spec.backbone_path.empty())
            throw std::runtime_error("--dataset requires --backbone for the frozen weights");
        p.dataset = load_dataset(spec.dataset_path);
        p.model = get_model(load_store(spec.backbone_path));
    } else {
        SyntheticTask task = make_block_sensitive_task(parse_task(spec.task, spec.train.seed));
        p.model = std::move(task.model);
        p.dataset = std::move(task.dataset);
    }
    if (spec.train.normalization != "none") {
        NormalizationPreset preset = normalization_preset(spec.train.normalization, p.dataset.channels);
        normalize(p.dataset, preset);
    }
    return p;
}

// One full run with artifacts; returns the final eval accuracy.
double run_one(RunSpec spec, bool quiet) {
    spec.train.strategy = parse_strategy(spec.strategy_name);
    const auto wall_start = std::chrono::steady_clock::now();
    PreparedRun p = prepare(spec);

    Trainer trainer(p.model, p.dataset, spec.train);
    RunResult result = trainer.run();

    const std::string root = artifact_root(spec.out);
    const std::string name =
        spec.name.empty() ? spec.strategy_name + "-s" + std::to_string(spec.train.seed) : spec.name;
    const fs::path dir = fs::path(root) / name;
    fs::create_directories(dir);

    const std::string metrics_path = (dir / "metrics.csv").string();
    const std::string history_path = (dir / "history.jsonl").string();
    const std::string ckpt_path = (dir / "checkpoint.pvpt").string();
    write_metrics_csv(metrics_path, result.metrics);
    write_history_jsonl(history_path, result.history);
    save_store(ckpt_path, trainer.checkpoint());

    RunManifest manifest;
    manifest.version = kVersion;
    manifest.seed = spec.train.seed;
    manifest.config = spec.train.snapshot();
    manifest.config["task"] = spec.task;
    manifest.artifacts["metrics"] = metrics_path;
    manifest.artifacts["history"] = history_path;
    manifest.artifacts["checkpoint"] = ckpt_path;
    manifest.phase_seconds = result.phase_seconds;
    manifest.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
    write_manifest((dir / "manifest.json").string(), manifest);

    if (!quiet)
        std::cout << name << ": final eval_acc " << format_g9(result.final_eval_accuracy) << ", artifacts in "
                  << dir.string() << "\n";
    return result.final_eval_accuracy;
}

int cmd_train(const RunSpec& spec) {
    run_one(spec, false);
    return 0;
}

std::vector<uint64_t> parse_seeds(const std::string& s) {
    std::vector<uint64_t> seeds;
    const size_t dash = s.find('-');
    if (dash != std::string::npos && s.find(',') == std::string::npos) {
        const uint64_t lo = std::stoull(s.substr(0, dash));
        const uint64_t hi = std::stoull(s.substr(dash + 1));
        for (uint64_t v = lo; v <= hi; ++v) seeds.push_back(v);
        return seeds;
    }
    std::istringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ','))
        if (!tok.empty()) seeds.push_back(std::stoull(tok));
    return seeds;
}

int cmd_sweep(const RunSpec& base, const std::string& strategies_csv, const std::string& seeds_spec,
              int jobs) {
    std::vector<std::string> strategies;
    {
        std::istringstream ss(strategies_csv);
        std::string tok;
        while (std::getline(ss, tok, ','))
            if (!tok.empty()) strategies.push_back(tok);
    }
    for (const std::string& s : strategies) parse_strategy(s);  // validate up front
    const std::vector<uint64_t> seeds = parse_seeds(seeds_spec);
    if (strategies.empty() || seeds.empty())
        throw CLI::ValidationError("sweep", "need at least one strategy and one seed");

    const std::string root = artifact_root(base.out);
    fs::create_directories(root);
    const std::string summary_path = (fs::path(root) / "sweep_summary.csv").string();
    std::ofstream summary(summary_path, std::ios::trunc);
    summary << "strategy,seed,final_acc\n" << std::flush;

    struct Job {
        std::string strategy;
        uint64_t seed;
    };
    std::vector<Job> jobs_list;
    for (const std::string& s : strategies)
        for (uint64_t seed : seeds) jobs_list.push_back({s, seed});

    std::mutex mu;
    std::map<std::string, std::vector<double>> accs;
    std::atomic<size_t> next{0};
    std::atomic<bool> failed{false};
    auto worker = [&]() {
        while (true) {
            const size_t i = next.fetch_add(1);
            if (i >= jobs_list.size()) return;
            const Job& job = jobs_list[i];
            RunSpec spec = base;
            spec.strategy_name = job.strategy;
            spec.train.seed = job.seed;
            spec.name = job.strategy + "-s" + std::to_string(job.seed);
            try {
                const double acc = run_one(spec, true);
                std::lock_guard<std::mutex> lock(mu);
                summary << job.strategy << ',' << job.seed << ',' << format_g9(acc) << "\n" << std::flush;
                accs[job.strategy].push_back(acc);
                std::cout << spec.name << ": " << format_g9(acc) << "\n";
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(mu);
                std::cerr << spec.name << " failed: " << e.what() << "\n";
                failed = true;
            }
        }
    };
    std::vector<std::thread> pool;
    const int nthreads = std::max(1, jobs);
    for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();

    if (failed) {
        summary << "# incomplete\n";
        return 1;
    }
    summary << "# complete\n";

    std::cout << "\nstrategy            median       iqr\n";
    for (auto& [strategy, values] : accs) {
        std::sort(values.begin(), values.end());
        const size_t n = values.size();
        const double median = n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
        const double q1 = values[n / 4];
        const double q3 = values[(3 * n) / 4];
        std::printf("%-18s %9.4f %9.4f\n", strategy.c_str(), median, q3 - q1);
    }
    std::cout << "summary: " << summary_path << "\n";
    return 0;
}

int cmd_plot(const std::vector<std::string>& metrics_paths, const std::string& history_path,
             const std::string& checkpoint_path, const std::string& dataset_path, const std::string& out) {
    const std::string root = artifact_root(out);
    fs::create_directories(root);
    bool made_any = false;

    if (!history_path.empty()) {
        const std::vector<HistoryRecord> history = read_history_jsonl(history_path);
        if (history.empty()) throw std::runtime_error("plot: empty history " + history_path);
        int num_blocks = 0;
        for (const HistoryRecord& h : history)
            for (int a : h.assignments) num_blocks = std::max(num_blocks, a);
        num_blocks = std::max(num_blocks, 1);
        double max_active = 1.0;
        SvgPlot plot(720, 360, "Prompt distribution over epochs");
        std::vector<std::vector<double>> counts_per_epoch;
        for (const HistoryRecord& h : history) {
            std::vector<double> counts(static_cast<size_t>(num_blocks), 0.0);
            double active = 0.0;
            for (int a : h.assignments)
                if (a >= 1) {
                    counts[static_cast<size_t>(a - 1)] += 1.0;
                    active += 1.0;
                }
            max_active = std::max(max_active, active);
            counts_per_epoch.push_back(std::move(counts));
        }
        plot.set_axes(0, static_cast<double>(history.size()) + 1, 0, max_active, "epoch",
                      "prompts per block (stacked)");
        for (size_t i = 0; i < counts_per_epoch.size(); ++i)
            plot.stacked_bar(static_cast<double>(history[i].epoch), 0.8, counts_per_epoch[i]);
        const std::string path = (fs::path(root) / "distribution_bars.svg").string();
        plot.write(path);
        std::cout << "wrote " << path << "\n";
        made_any = true;
    }

    if (!metrics_paths.empty()) {
        SvgPlot plot(720, 360, "Evaluation accuracy");
        double xmax = 1.0;
        std::vector<std::pair<std::string, std::vector<MetricsRow>>> all;
        for (const std::string& p : metrics_paths) {
            all.push_back({fs::path(p).parent_path().filename().string(), read_metrics_csv(p)});
            for (const MetricsRow& r : all.back().second) xmax = std::max(xmax, static_cast<double>(r.epoch));
        }
        plot.set_axes(0, xmax, 0, 1, "epoch", "eval accuracy");
        const auto& pal = SvgPlot::palette();
        for (size_t i = 0; i < all.size(); ++i) {
            std::vector<double> xs, ys;
            for (const MetricsRow& r : all[i].second) {
                xs.push_back(static_cast<double>(r.epoch));
                ys.push_back(r.eval_acc);
            }
            plot.polyline(xs, ys, pal[i % pal.size()], all[i].first);
        }
        const std::string path = (fs::path(root) / "accuracy_curves.svg").string();
        plot.write(path);
        std::cout << "wrote " << path << "\n";
        made_any = true;
    }

    if (!checkpoint_path.empty()) {
        if (dataset_path.empty()) throw std::runtime_error("plot: --checkpoint needs --dataset for a batch");
        ArrayStore store = load_store(checkpoint_path);
        VitModel model = get_model(store);
        const Tensor& pv = store.get("prompts");
        PromptSet prompts(pv.shape[0], pv.shape[1]);
        prompts.values.values = pv.values;
        const Tensor& dv = store.get("distribution");
        Distribution dist(dv.numel(), model.cfg.num_blocks);
        for (int64_t k = 0; k < dv.numel(); ++k)
            dist.assignments[static_cast<size_t>(k)] = static_cast<int>(dv.values[static_cast<size_t>(k)]);

        Dataset ds = load_dataset(dataset_path);
        std::vector<int64_t> idx = ds.indices_of(kSplitTest);
        if (idx.empty()) idx = ds.indices_of(kSplitTrain);
        if (idx.size() > 64) idx.resize(64);
        Batch batch = ds.make_batch(idx);

        const std::vector<std::vector<double>> rows = cls_prompt_attention(model, batch.images, prompts, dist);
        SvgPlot plot(720, 420, "Class-token attention to prompts");
        plot.set_axes(0, static_cast<double>(prompts.count()), 0, static_cast<double>(model.cfg.num_blocks),
                      "prompt index", "block");
        double max_w = 1e-9;
        for (int b = 0; b < model.cfg.num_blocks; ++b)
            for (double w : rows[static_cast<size_t>(b)]) max_w = std::max(max_w, w);
        for (int b = 0; b < model.cfg.num_blocks; ++b) {
            const std::vector<int64_t> hosted = dist.prompts_in_block(b + 1);
            for (size_t j = 0; j < hosted.size(); ++j)
                plot.heat_cell(static_cast<double>(hosted[j]), static_cast<double>(b), 1.0, 1.0,
                               rows[static_cast<size_t>(b)][j] / max_w);
        }
        const std::string path = (fs::path(root) / "attention_heatmap.svg").string();
        plot.write(path);
        std::cout << "wrote " << path << "\n";
        made_any = true;
    }

    if (!made_any) throw std::runtime_error("plot: nothing to plot, pass --metrics/--history/--checkpoint");
    return 0;
}

int cmd_gen_data(const std::string& task, uint64_t seed, const std::string& out_data,
                 const std::string& out_backbone, bool certify) {
    SyntheticTask t = make_block_sensitive_task(parse_task(task, seed));
    save_dataset(out_data, t.dataset);
    std::cout << "wrote " << out_data << " (" << t.dataset.count << " samples)\n";
    if (!out_backbone.empty()) {
        ArrayStore store;
        put_model(store, t.model);
        save_store(out_backbone, store);
        std::cout << "wrote " << out_backbone << "\n";
    }
    if (certify) {
        PlacementSweep sweep = placement_sweep(t, 6, 60, 0.5, seed);
        std::cout << "placement sweep (budget 6): ";
        for (double a : sweep.per_block) std::cout << format_g9(a) << ' ';
        std::cout << "| uniform " << format_g9(sweep.uniform) << " | zero " << format_g9(sweep.zero_budget)
                  << "\n";
        if (!check_certificate(t, sweep)) {
            std::cerr << "certificate FAILED: concentrated placement at block " << t.cfg.sensitive_block
                      << " is not strictly optimal\n";
            return 1;
        }
        std::cout << "certificate ok: block " << t.cfg.sensitive_block << " strictly optimal\n";
    }
    return 0;
}

int cmd_verify(bool full) {
    std::vector<CheckResult> results;
    if (full) {
        results.push_back(check_kernel_parity());
        results.push_back(check_gradient_fidelity(100));
        results.push_back(check_taylor_fidelity(200));
        results.push_back(check_reward_identity(50));
        results.push_back(check_ppo_clip_gradient());
        results.push_back(check_ppo_param_count());
        results.push_back(check_ppo_bandit_improvement(100, 200));
    } else {
        results = run_fast_checks();
    }
    // guard invariants on a fresh miniature run
    {
        SyntheticTaskConfig tcfg;
        tcfg.num_blocks = 3;
        tcfg.sensitive_block = 2;
        tcfg.train_size = 48;
        tcfg.val_size = 8;
        tcfg.test_size = 16;
        SyntheticTask task = make_block_sensitive_task(tcfg);
        TrainConfig cfg;
        cfg.total_epochs = 6;
        cfg.batch_size = 16;
        cfg.learning_rate = 0.3;
        cfg.prompts_total = 6;
        cfg.probe_batch_size = 32;
        Trainer trainer(task.model, task.dataset, cfg);
        RunResult res = trainer.run();
        results.push_back(check_guard_invariants(res.history));
    }
    bool all_pass = true;
    for (const CheckResult& r : results) {
        std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << r.name << ": " << r.detail << "\n";
        all_pass = all_pass && r.pass;
    }
    std::cout << (all_pass ? "verify: all checks passed\n" : "verify: FAILURES present\n");
    return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"prompt-relocation training engine"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    RunSpec spec;
    CLI::App* train = app.add_subcommand("train", "run one training run and write artifacts");
    add_train_options(train, spec);

    RunSpec sweep_spec;
    std::string strategies_csv = "provpt,vpt_deep";
    std::string seeds_spec = "0-2";
    int jobs = 1;
    CLI::App* sweep = app.add_subcommand("sweep", "run a strategy x seed grid and summarize");
    add_train_options(sweep, sweep_spec);
    sweep->add_option("--strategies", strategies_csv, "comma-separated strategies")->capture_default_str();
    sweep->add_option("--seeds", seeds_spec, "seed list 0,1,2 or range 0-9")->capture_default_str();
    sweep->add_option("--jobs", jobs, "concurrent runs")->capture_default_str();

    std::vector<std::string> plot_metrics;
    std::string plot_history, plot_checkpoint, plot_dataset, plot_out;
    CLI::App* plot = app.add_subcommand("plot", "render SVG reports from run artifacts");
    plot->add_option("--metrics", plot_metrics, "metrics CSV file(s)");
    plot->add_option("--history", plot_history, "distribution history JSONL");
    plot->add_option("--checkpoint", plot_checkpoint, "run checkpoint for the attention heatmap");
    plot->add_option("--dataset", plot_dataset, "PVDS dataset used with --checkpoint");
    plot->add_option("--out", plot_out, "output directory");

    std::string gen_task = "synthetic:b=3";
    uint64_t gen_seed = 0;
    std::string gen_out = "task.pvds";
    std::string gen_backbone = "backbone.pvpt";
    bool gen_certify = false;
    CLI::App* gen = app.add_subcommand("gen-data", "generate a block-sensitive synthetic task");
    gen->add_option("--task", gen_task, "task spec")->capture_default_str();
    gen->add_option("--seed", gen_seed, "generator seed")->capture_default_str();
    gen->add_option("--out", gen_out, "output dataset path")->capture_default_str();
    gen->add_option("--backbone", gen_backbone, "output backbone store path (empty to skip)")
        ->capture_default_str();
    gen->add_flag("--certify", gen_certify, "run the per-block placement sweep certificate");

    bool verify_full = false;
    CLI::App* verify = app.add_subcommand("verify", "run the oracle/invariant suite");
    verify->add_flag("--full", verify_full, "acceptance-sized check budgets");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (train->parsed()) return cmd_train(spec);
        if (sweep->parsed()) return cmd_sweep(sweep_spec, strategies_csv, seeds_spec, jobs);
        if (plot->parsed()) return cmd_plot(plot_metrics, plot_history, plot_checkpoint, plot_dataset, plot_out);
        if (gen->parsed()) return cmd_gen_data(gen_task, gen_seed, gen_out, gen_backbone, gen_certify);
        if (verify->parsed()) return cmd_verify(verify_full);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
