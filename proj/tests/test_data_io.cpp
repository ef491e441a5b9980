#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "provpt/data.hpp"
#include "provpt/io.hpp"

using namespace provpt;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

Dataset small_fixture() {
    Dataset ds;
    ds.count = 10;
    ds.height = 4;
    ds.width = 4;
    ds.channels = 1;
    ds.num_classes = 10;
    ds.images.resize(10 * 16);
    for (size_t i = 0; i < ds.images.size(); ++i) ds.images[i] = static_cast<float>(i) * 0.25f;
    ds.labels = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    ds.split = {0, 0, 0, 0, 0, 0, 1, 1, 2, 2};
    return ds;
}

}  // namespace

TEST_CASE("dataset round trip is bit-identical") {
    const std::string path = temp_path("provpt_ds_test.pvds");
    Dataset ds = small_fixture();
    save_dataset(path, ds);
    Dataset back = load_dataset(path);
    CHECK(back.count == ds.count);
    CHECK(back.images == ds.images);
    CHECK(back.labels == ds.labels);
    CHECK(back.split == ds.split);
    std::remove(path.c_str());
}

TEST_CASE("ten-sample fixture reads labels 0..9 back exactly") {
    const std::string path = temp_path("provpt_ds_fixture.pvds");
    save_dataset(path, small_fixture());
    Dataset back = load_dataset(path);
    for (uint32_t i = 0; i < 10; ++i) CHECK(back.labels[i] == i);
    std::remove(path.c_str());
}

TEST_CASE("empty and truncated dataset files fail with byte offsets") {
    const std::string path = temp_path("provpt_ds_bad.pvds");
    {
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
    }
    CHECK_THROWS_WITH_AS(load_dataset(path), doctest::Contains("byte offset"), std::runtime_error);
    {
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        f << "PVDS";
        const uint32_t version = 1;
        f.write(reinterpret_cast<const char*>(&version), 4);
        // header cut off after the version
    }
    CHECK_THROWS_AS(load_dataset(path), std::runtime_error);
    std::remove(path.c_str());
}

TEST_CASE("normalization presets") {
    SUBCASE("identity preset is the identity") {
        Tensor img({1, 2, 2}, {0.1, 0.5, -0.25, 2.0});
        Tensor orig = img;
        normalize(img, normalization_preset("none", 1));
        CHECK(img.values == orig.values);
    }
    SUBCASE("a constant image equal to the mean maps to zeros") {
        Tensor img({1, 2, 2}, 0.5);
        normalize(img, normalization_preset("inception", 1));
        for (double v : img.values) CHECK(v == 0.0);
    }
    SUBCASE("inverse transform recovers the input") {
        NormalizationPreset p = normalization_preset("inception", 1);
        Tensor img({1, 2, 2}, {0.9, 0.1, 0.4, 0.7});
        Tensor orig = img;
        normalize(img, p);
        for (size_t i = 0; i < img.values.size(); ++i) {
            const double recovered = img.values[i] * p.std[0] + p.mean[0];
            CHECK(recovered == doctest::Approx(orig.values[i]).epsilon(1e-12));
        }
    }
    SUBCASE("channel mismatch is a contract violation") {
        Dataset ds = small_fixture();
        NormalizationPreset p = normalization_preset("imagenet", 3);
        CHECK_THROWS_AS(normalize(ds, p), std::invalid_argument);
    }
    SUBCASE("unknown preset name is rejected") {
        CHECK_THROWS_AS(normalization_preset("other", 1), std::invalid_argument);
    }
}

TEST_CASE("generator determinism: same config and seed give identical bytes") {
    SyntheticTaskConfig cfg;
    cfg.train_size = 32;
    cfg.val_size = 8;
    cfg.test_size = 16;
    cfg.seed = 9;
    SyntheticTask a = make_block_sensitive_task(cfg);
    SyntheticTask b = make_block_sensitive_task(cfg);
    CHECK(a.dataset.images == b.dataset.images);
    CHECK(a.dataset.labels == b.dataset.labels);
    bool weights_equal = true;
    a.model.w.for_each_named([&](const std::string& name, const Tensor& t) {
        const Tensor* other = nullptr;
        b.model.w.for_each_named([&](const std::string& n2, const Tensor& t2) {
            if (n2 == name) other = &t2;
        });
        weights_equal = weights_equal && other && other->values == t.values;
    });
    CHECK(weights_equal);
}

TEST_CASE("promptless synthetic model is class-blind: constant logits") {
    SyntheticTaskConfig cfg;
    cfg.train_size = 16;
    cfg.val_size = 4;
    cfg.test_size = 12;
    cfg.seed = 21;
    SyntheticTask task = make_block_sensitive_task(cfg);
    Batch batch = task.dataset.make_batch(task.dataset.indices_of(kSplitTest));
    VitModel m = task.model;
    Rng hrng(3);
    xavier_uniform(m.w.head_w, m.cfg.embed_dim, m.cfg.num_classes, hrng);

    Tape t;
    VitForward f = vit_forward(t, m, batch.images, PromptSet(0, m.cfg.embed_dim),
                               Distribution(0, m.cfg.num_blocks));
    const std::vector<double>& logits = t.value(f.logits);
    const int64_t classes = m.cfg.num_classes;
    for (int64_t r = 1; r < batch.images.shape[0]; ++r)
        for (int64_t c = 0; c < classes; ++c)
            CHECK(logits[static_cast<size_t>(r * classes + c)] ==
                  doctest::Approx(logits[static_cast<size_t>(c)]).epsilon(1e-9));
}

TEST_CASE("array store round trip is bit-identical") {
    const std::string path = temp_path("provpt_store_test.pvpt");
    ArrayStore store;
    Rng rng(5);
    Tensor a({3, 4});
    for (double& v : a.values) v = rng.normal();
    Tensor b({7});
    for (double& v : b.values) v = rng.normal();
    store.put("alpha", a);
    store.put("nested.beta", b);
    save_store(path, store);
    ArrayStore back = load_store(path);
    CHECK(back.get("alpha").values == a.values);
    CHECK(back.get("alpha").shape == a.shape);
    CHECK(back.get("nested.beta").values == b.values);
    CHECK_THROWS_AS(back.get("missing"), std::runtime_error);
    std::remove(path.c_str());
}

TEST_CASE("corrupt store magic is rejected") {
    const std::string path = temp_path("provpt_store_bad.pvpt");
    {
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        f << "XXXX";
    }
    CHECK_THROWS_AS(load_store(path), std::runtime_error);
    std::remove(path.c_str());
}

TEST_CASE("metrics csv round trip and deterministic formatting") {
    std::vector<MetricsRow> rows;
    MetricsRow r1;
    r1.epoch = 1;
    r1.train_loss = 1.23456789012345;
    r1.probe_loss = 0.5;
    r1.eval_acc = 0.25;
    rows.push_back(r1);
    MetricsRow r2;
    r2.epoch = 2;
    r2.train_loss = 0.9;
    r2.probe_loss = 0.4;
    r2.eval_acc = 0.5;
    r2.relocated = true;
    r2.k_star = 3;
    r2.source = 1;
    r2.target = 5;
    r2.reward = 0.0123456789;
    rows.push_back(r2);

    const std::string text = format_metrics_csv(rows);
    CHECK(text ==
          "epoch,train_loss,probe_loss,eval_acc,relocated,k_star,source,target,reward\n"
          "1,1.23456789,0.5,0.25,0,,,,\n"
          "2,0.9,0.4,0.5,1,3,1,5,0.0123456789\n");

    const std::string path = temp_path("provpt_metrics_test.csv");
    write_metrics_csv(path, rows);
    std::vector<MetricsRow> back = read_metrics_csv(path);
    REQUIRE(back.size() == 2);
    CHECK(back[1].relocated);
    CHECK(back[1].k_star.value() == 3);
    CHECK(back[0].reward.has_value() == false);
    CHECK(format_metrics_csv(back) == text);
    std::remove(path.c_str());
}

TEST_CASE("history jsonl round trip") {
    std::vector<HistoryRecord> records;
    HistoryRecord h1;
    h1.epoch = 1;
    h1.assignments = {1, 2, 0};
    records.push_back(h1);
    HistoryRecord h2;
    h2.epoch = 2;
    h2.assignments = {1, 2, 3};
    h2.max_idleness = 0.25;
    RelocationEvent ev;
    ev.pruned_index = 2;
    ev.source_block = 1;
    ev.target_block = 3;
    ev.idleness = 0.25;
    ev.loss_before = 1.0;
    ev.loss_after_tuning = 0.8;
    ev.approx_reward = -0.05;
    h2.event = ev;
    records.push_back(h2);

    const std::string path = temp_path("provpt_history_test.jsonl");
    write_history_jsonl(path, records);
    std::vector<HistoryRecord> back = read_history_jsonl(path);
    REQUIRE(back.size() == 2);
    CHECK(!back[0].event.has_value());
    CHECK(!back[0].max_idleness.has_value());
    REQUIRE(back[1].event.has_value());
    CHECK(back[1].event->pruned_index == 2);
    CHECK(back[1].event->approx_reward == -0.05);
    CHECK(format_history_jsonl(back) == format_history_jsonl(records));
    std::remove(path.c_str());
}

TEST_CASE("manifest requires artifacts to exist") {
    RunManifest m;
    m.version = "test";
    m.seed = 1;
    m.artifacts["metrics"] = temp_path("provpt_does_not_exist.csv");
    CHECK_THROWS_AS(write_manifest(temp_path("provpt_manifest.json"), m), std::runtime_error);

    const std::string metrics = temp_path("provpt_manifest_metrics.csv");
    write_metrics_csv(metrics, {});
    m.artifacts["metrics"] = metrics;
    m.phase_seconds["tune"] = 1.5;
    const std::string path = temp_path("provpt_manifest.json");
    write_manifest(path, m);
    RunManifest back = read_manifest(path);
    CHECK(back.seed == 1);
    CHECK(back.phase_seconds.at("tune") == 1.5);
    std::remove(path.c_str());
    std::remove(metrics.c_str());
}
