#include <catch2/catch_amalgamated.hpp>

#include <vector>

#include "test_util.hpp"
#include "w2vbert/probe.hpp"

using namespace w2v;
using namespace w2v::testutil;
using Catch::Approx;

TEST_CASE("label downsampling: majority vote in groups of four, ties to the smaller ID") {
    CHECK(downsample_labels({0, 0, 1, 1}) == std::vector<int>{0});           // tie -> 0
    CHECK(downsample_labels({1, 1, 1, 0}) == std::vector<int>{1});           // majority
    CHECK(downsample_labels({2, 2, 3, 3, 3}) == std::vector<int>{2, 3});     // T=5 -> T'=2
    CHECK(downsample_labels({5, 5, 5, 5, 1, 1, 1, 1, 7}) ==
          std::vector<int>{5, 1, 7}); // trailing partial group
    // length contract follows the encoder reduction
    for (int t : {4, 7, 100, 257})
        CHECK((int)downsample_labels(std::vector<int>((size_t)t, 0)).size() ==
              encoder_output_length(t));
}

TEST_CASE("constant labels are learned perfectly") {
    TrainConfig cfg = tiny_train_config();
    auto corpus = tiny_corpus(cfg);
    for (auto& utt : corpus)
        std::fill(utt.labels.begin(), utt.labels.end(), 0);
    W2vBertModel<float> model(cfg.model, 1);
    ProbeResult res = train_probe(model, corpus, 3, 50, 0.05);
    CHECK(res.frame_accuracy == 1.0);
    CHECK(res.baseline_accuracy == 1.0);
    CHECK(res.n_states == 1);
}

TEST_CASE("labels decoupled from the signal score near chance") {
    TrainConfig cfg = tiny_train_config();
    cfg.corpus_n_utts = 4;
    auto corpus = tiny_corpus(cfg);
    // replace labels with a pattern independent of the audio
    int k = 0;
    const int n_fake = 4;
    for (auto& utt : corpus)
        for (auto& l : utt.labels) l = (k = (k + 13) % 71) % n_fake;
    W2vBertModel<float> model(cfg.model, 1);
    ProbeResult res = train_probe(model, corpus, 5, 100, 0.05);
    CHECK(res.frame_accuracy < 0.65); // chance is 0.25; allow generous slack
}

TEST_CASE("probing never mutates the encoder") {
    TrainConfig cfg = tiny_train_config();
    auto corpus = tiny_corpus(cfg);
    W2vBertModel<float> model(cfg.model, 1);
    std::map<std::string, std::vector<float>> before;
    for (const auto& [name, p] : model.params().all()) before[name] = p.values();
    train_probe(model, corpus, 7, 30, 0.05);
    for (const auto& [name, p] : model.params().all()) CHECK(p.values() == before[name]);
}

TEST_CASE("probe results are deterministic in the split seed") {
    TrainConfig cfg = tiny_train_config();
    auto corpus = tiny_corpus(cfg);
    W2vBertModel<float> model(cfg.model, 1);
    ProbeResult a = train_probe(model, corpus, 9, 40, 0.05);
    ProbeResult b = train_probe(model, corpus, 9, 40, 0.05);
    CHECK(a.frame_accuracy == b.frame_accuracy);
    CHECK(a.baseline_accuracy == b.baseline_accuracy);
    CHECK(a.n_eval_frames == b.n_eval_frames);
}

TEST_CASE("probe rejects unusable corpora") {
    TrainConfig cfg = tiny_train_config();
    auto corpus = tiny_corpus(cfg);
    W2vBertModel<float> model(cfg.model, 1);
    auto unlabeled = corpus;
    for (auto& u : unlabeled) u.labels.clear();
    CHECK_THROWS_AS(train_probe(model, unlabeled, 1, 10, 0.05), TensorError);
    std::vector<TrainUtterance> single{corpus[0]};
    CHECK_THROWS_AS(train_probe(model, single, 1, 10, 0.05), TensorError);
}
