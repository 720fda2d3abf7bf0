#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "test_util.hpp"
#include "w2vbert/trainer.hpp"

using namespace w2v;
using namespace w2v::testutil;
using Catch::Approx;

namespace {
std::vector<const TrainUtterance*> ptrs(const std::vector<TrainUtterance>& utts) {
    std::vector<const TrainUtterance*> out;
    for (const auto& u : utts) out.push_back(&u);
    return out;
}

// metrics rows with the wall-time column stripped (the one legitimately
// non-reproducible field)
std::vector<std::string> metrics_without_walltime(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::vector<std::string> rows;
    std::string line;
    while (std::getline(in, line)) {
        size_t comma = line.rfind(',');
        rows.push_back(line.substr(0, comma));
    }
    return rows;
}
} // namespace

TEST_CASE("lr_override=0 computes losses without touching the parameters") {
    TrainConfig cfg = tiny_train_config();
    auto corpus = tiny_corpus(cfg);
    Trainer trainer(cfg);
    std::map<std::string, std::vector<float>> before;
    for (const auto& [name, p] : trainer.model().params().all()) before[name] = p.values();
    LossBreakdown<float> parts = trainer.pretrain_step(ptrs(corpus), 0.0);
    CHECK(parts.masked_count > 0);
    CHECK(parts.l_p > 0);
    for (const auto& [name, p] : trainer.model().params().all()) CHECK(p.values() == before[name]);
    CHECK(trainer.step() == 1);

    // a real step must move the parameters
    trainer.pretrain_step(ptrs(corpus));
    bool moved = false;
    for (const auto& [name, p] : trainer.model().params().all())
        if (p.values() != before[name]) moved = true;
    CHECK(moved);
}

TEST_CASE("loss composition holds on real training steps") {
    TrainConfig cfg = tiny_train_config();
    auto corpus = tiny_corpus(cfg);
    Trainer trainer(cfg);
    for (int i = 0; i < 3; ++i) {
        LossBreakdown<float> p = trainer.pretrain_step(ptrs(corpus), 0.0);
        CHECK(p.l_c == Approx(p.l_w + cfg.weights.alpha * p.l_d).margin(1e-6));
        CHECK(p.l_p == Approx(p.l_c + p.l_m).margin(1e-6)); // beta = gamma = 1
        CHECK(p.mlm_accuracy >= 0.0);
        CHECK(p.mlm_accuracy <= 1.0);
        CHECK(trainer.last_perplexity() >= 1.0);
        CHECK(trainer.last_perplexity() <= cfg.model.quantizer.entries_per_group);
    }
}

TEST_CASE("identical seeds give bitwise-identical training trajectories") {
    TrainConfig cfg = tiny_train_config();
    auto corpus = tiny_corpus(cfg);
    Trainer a(cfg), b(cfg);
    for (int i = 0; i < 3; ++i) {
        LossBreakdown<float> pa = a.pretrain_step(ptrs(corpus));
        LossBreakdown<float> pb = b.pretrain_step(ptrs(corpus));
        CHECK(pa.l_p == pb.l_p);
        CHECK(pa.l_w == pb.l_w);
        CHECK(pa.l_m == pb.l_m);
        CHECK(pa.mlm_accuracy == pb.mlm_accuracy);
    }
    for (const auto& [name, p] : a.model().params().all())
        CHECK(p.values() == b.model().params().all().at(name).values());
}

TEST_CASE("padding past valid_len cannot influence the step") {
    TrainConfig cfg = tiny_train_config();
    auto corpus = tiny_corpus(cfg);
    auto padded = corpus;
    for (auto& utt : padded) {
        // append garbage rows, keep valid_len
        Tensor<float> garbage = Tensor<float>::full(Shape{7, utt.features.dim(1)}, 1e6f);
        utt.features = concat<float>({utt.features, garbage}, 0);
    }
    Trainer a(cfg), b(cfg);
    LossBreakdown<float> pa = a.pretrain_step(ptrs(corpus), 0.0);
    LossBreakdown<float> pb = b.pretrain_step(ptrs(padded), 0.0);
    CHECK(pa.l_p == pb.l_p);
    CHECK(pa.l_w == pb.l_w);
    CHECK(pa.l_d == pb.l_d);
    CHECK(pa.l_m == pb.l_m);
}

TEST_CASE("save -> load -> save produces byte-identical checkpoints") {
    TrainConfig cfg = tiny_train_config();
    auto corpus = tiny_corpus(cfg);
    std::string dir = fresh_dir("w2v_trainer_ckpt");
    Trainer a(cfg);
    a.pretrain_step(ptrs(corpus));
    a.pretrain_step(ptrs(corpus));
    a.save_checkpoint(dir + "/a.w2vb");

    Trainer b(cfg);
    b.load_checkpoint(dir + "/a.w2vb");
    b.save_checkpoint(dir + "/b.w2vb");
    CHECK(file_bytes(dir + "/a.w2vb") == file_bytes(dir + "/b.w2vb"));
    CHECK(b.step() == 2);
    std::filesystem::remove_all(dir);
}

TEST_CASE("checkpoint guards: model mismatch, seed mismatch, corruption") {
    TrainConfig cfg = tiny_train_config();
    auto corpus = tiny_corpus(cfg);
    std::string dir = fresh_dir("w2v_trainer_guards");
    Trainer a(cfg);
    a.pretrain_step(ptrs(corpus));
    std::string path = dir + "/ckpt.w2vb";
    a.save_checkpoint(path);

    TrainConfig other = cfg;
    other.model.model_dim = 16;
    other.model.quantizer.code_dim = 16;
    Trainer mismatched(other);
    CHECK_THROWS_AS(mismatched.load_checkpoint(path), CheckpointError);

    TrainConfig reseeded = cfg;
    reseeded.seed = cfg.seed + 1;
    Trainer wrong_seed(reseeded);
    CHECK_THROWS_WITH(wrong_seed.load_checkpoint(path), Catch::Matchers::ContainsSubstring("seed"));

    auto bytes = file_bytes(path);
    bytes[bytes.size() / 2] ^= 0xFF;
    {
        std::ofstream out(path, std::ios::binary);
        out.write(reinterpret_cast<char*>(bytes.data()), (std::streamsize)bytes.size());
    }
    Trainer fresh(cfg);
    CHECK_THROWS_AS(fresh.load_checkpoint(path), CheckpointError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("run_pretraining writes the metrics contract") {
    TrainConfig cfg = tiny_train_config();
    auto corpus = tiny_corpus(cfg);
    std::string dir = fresh_dir("w2v_trainer_run");
    Trainer trainer(cfg);
    PretrainResult res = run_pretraining(cfg, corpus, dir, trainer);

    std::ifstream metrics(dir + "/metrics.csv");
    REQUIRE(metrics.good());
    std::string header;
    std::getline(metrics, header);
    CHECK(header == "step,l_w,l_d,l_c,l_m,l_p,mlm_acc,codebook_perplexity,lr,wall_time_s");
    int rows = 0;
    std::string line;
    while (std::getline(metrics, line)) ++rows;
    CHECK(rows == (int)res.metrics.size());
    CHECK(res.metrics.back().step == cfg.total_steps);
    CHECK(std::filesystem::exists(res.final_checkpoint));
    CHECK(std::filesystem::exists(dir + "/checkpoint_step000002.w2vb"));
    std::filesystem::remove_all(dir);
}

TEST_CASE("resume reproduces the uninterrupted run bit for bit") {
    TrainConfig cfg = tiny_train_config();
    cfg.total_steps = 6;
    cfg.checkpoint_every = 3;
    auto corpus = tiny_corpus(cfg);

    std::string dir_full = fresh_dir("w2v_resume_full");
    Trainer full(cfg);
    run_pretraining(cfg, corpus, dir_full, full);

    std::string dir_half = fresh_dir("w2v_resume_half");
    TrainConfig half_cfg = cfg;
    half_cfg.total_steps = 3;
    Trainer half(half_cfg);
    run_pretraining(half_cfg, corpus, dir_half, half);

    // second half: resume from the step-3 checkpoint and continue to 6.
    // run_pretraining wrote checkpoint_final.w2vb at step 3 for the short run.
    Trainer resumed(cfg);
    run_pretraining(cfg, corpus, dir_half, resumed, dir_half + "/checkpoint_final.w2vb");

    CHECK(metrics_without_walltime(dir_half + "/metrics.csv") ==
          metrics_without_walltime(dir_full + "/metrics.csv"));
    // final model parameters agree bitwise
    for (const auto& [name, p] : full.model().params().all())
        CHECK(p.values() == resumed.model().params().all().at(name).values());
    std::filesystem::remove_all(dir_full);
    std::filesystem::remove_all(dir_half);
}

TEST_CASE("batch iteration is a pure function of (seed, step)") {
    TrainConfig cfg = tiny_train_config();
    cfg.corpus_n_utts = 5;
    auto corpus = tiny_corpus(cfg);
    for (int64_t step : {0, 1, 2, 7, 23}) {
        auto a = batch_for_step(corpus, 2, cfg.seed, step);
        auto b = batch_for_step(corpus, 2, cfg.seed, step);
        CHECK(a == b);
        CHECK(!a.empty());
        CHECK((int)a.size() <= 2);
    }
    // every utterance appears exactly once per epoch
    std::set<const TrainUtterance*> seen;
    for (int64_t step = 0; step < 3; ++step)
        for (const auto* u : batch_for_step(corpus, 2, cfg.seed, step)) seen.insert(u);
    CHECK(seen.size() == corpus.size());
}

TEST_CASE("empty batch and empty corpus are rejected") {
    TrainConfig cfg = tiny_train_config();
    Trainer trainer(cfg);
    CHECK_THROWS_AS(trainer.pretrain_step({}), TensorError);
    std::vector<TrainUtterance> none;
    std::string dir = fresh_dir("w2v_trainer_empty");
    Trainer t2(cfg);
    CHECK_THROWS_AS(run_pretraining(cfg, none, dir, t2), TensorError);
    std::filesystem::remove_all(dir);
}
