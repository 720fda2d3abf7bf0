#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "w2vbert/checkpoint.hpp"
#include "w2vbert/config.hpp"

using namespace w2v;
using Catch::Approx;

namespace {
std::string tmp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

std::vector<unsigned char> slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::vector<unsigned char>((std::istreambuf_iterator<char>(in)),
                                      std::istreambuf_iterator<char>());
}
} // namespace

TEST_CASE("config text parsing: comments, whitespace, line-numbered errors") {
    std::istringstream ok(R"(# a comment
model_dim = 16

  n_heads=2   # trailing comment
alpha = 0.25
)");
    KeyValueMap kv = parse_config_text(ok);
    CHECK(kv.at("model_dim") == "16");
    CHECK(kv.at("n_heads") == "2");
    CHECK(kv.at("alpha") == "0.25");

    std::istringstream bad("model_dim = 16\nnot a key value pair\n");
    CHECK_THROWS_WITH(parse_config_text(bad), Catch::Matchers::ContainsSubstring("line 2"));
    std::istringstream empty_key("= 5\n");
    CHECK_THROWS_AS(parse_config_text(empty_key), ConfigError);
}

TEST_CASE("unknown keys are rejected; known keys override defaults") {
    CHECK_THROWS_WITH(TrainConfig::from_kv({{"no_such_knob", "1"}}),
                      Catch::Matchers::ContainsSubstring("no_such_knob"));
    TrainConfig cfg = TrainConfig::from_kv({{"model_dim", "16"}, {"alpha", "0.5"}, {"seed", "9"}});
    CHECK(cfg.model.model_dim == 16);
    CHECK(cfg.weights.alpha == 0.5);
    CHECK(cfg.seed == 9);
    // untouched keys keep their defaults
    CHECK(cfg.model.n_heads == 4);
    CHECK(cfg.mask.start_prob == Approx(0.065));
    CHECK(cfg.contrastive.n_distractors == 10);
    CHECK(cfg.schedule.warmup_steps == 200);
}

TEST_CASE("to_kv / from_kv round trip preserves every field") {
    TrainConfig cfg;
    cfg.model.model_dim = 24;
    cfg.model.n_heads = 3;
    cfg.model.quantizer.entries_per_group = 32;
    cfg.weights.beta = 0.0;
    cfg.total_steps = 123;
    cfg.corpus_n_states = 5;
    TrainConfig back = TrainConfig::from_kv(cfg.to_kv());
    CHECK(back.to_kv() == cfg.to_kv());
    CHECK(back.model.model_dim == 24);
    CHECK(back.weights.beta == 0.0);
}

TEST_CASE("invalid configurations fail fast") {
    CHECK_THROWS_AS(TrainConfig::from_kv({{"batch_size", "0"}}), ConfigError);
    CHECK_THROWS_AS(TrainConfig::from_kv({{"total_steps", "0"}}), ConfigError);
    CHECK_THROWS_AS(TrainConfig::from_kv({{"model_dim", "10"}}), TensorError); // 10 % 4 != 0
}

TEST_CASE("config file write/load round trip") {
    std::string p = tmp_path("w2v_cfg.txt");
    TrainConfig cfg;
    cfg.batch_size = 3;
    write_kv_file(p, cfg.to_kv());
    KeyValueMap kv = load_config_file(p);
    CHECK(TrainConfig::from_kv(kv).batch_size == 3);
    CHECK_THROWS_AS(load_config_file(tmp_path("w2v_missing_cfg.txt")), ConfigError);
    std::remove(p.c_str());
}

// ---------------------------------------------------------------------------
// checkpoint container
// ---------------------------------------------------------------------------

TEST_CASE("checkpoint round trip is lossless for all dtypes") {
    std::vector<CheckpointEntry> entries;
    Rng rng{3};
    Tensor<float> tf = Tensor<float>::randn(Shape{4, 5}, rng);
    Tensor<double> td = Tensor<double>::randn(Shape{7}, rng);
    entries.push_back(entry_from_tensor("a/weight", tf));
    entries.push_back(entry_from_tensor("b.vec", td));
    entries.push_back(entry_from_i64("__step", -1234567890123LL));
    entries.push_back(entry_from_f64("__temp", 0.7312));

    std::string p = tmp_path("w2v_ckpt.w2vb");
    write_checkpoint(p, entries);
    auto back = read_checkpoint(p);
    REQUIRE(back.size() == 4);
    CHECK(back[0].name == "a/weight");
    CHECK(back[0].dims == std::vector<uint64_t>{4, 5});
    Tensor<float> tf2 = Tensor<float>::zeros(Shape{4, 5});
    load_entry_into_tensor(back[0], tf2);
    CHECK(tf2.values() == tf.values());
    Tensor<double> td2 = Tensor<double>::zeros(Shape{7});
    load_entry_into_tensor(back[1], td2);
    CHECK(td2.values() == td.values());
    CHECK(entry_to_i64(back[2]) == -1234567890123LL);
    CHECK(entry_to_f64(back[3]) == 0.7312);

    // writing the same entries twice yields byte-identical files
    std::string p2 = tmp_path("w2v_ckpt2.w2vb");
    write_checkpoint(p2, entries);
    CHECK(slurp(p) == slurp(p2));
    std::remove(p.c_str());
    std::remove(p2.c_str());
}

TEST_CASE("corruption and truncation are detected") {
    std::vector<CheckpointEntry> entries;
    Rng rng{4};
    entries.push_back(entry_from_tensor("w", Tensor<float>::randn(Shape{16}, rng)));
    std::string p = tmp_path("w2v_ckpt_corrupt.w2vb");
    write_checkpoint(p, entries);
    auto bytes = slurp(p);

    SECTION("payload bit flip fails the CRC") {
        auto bad = bytes;
        bad[bad.size() - 20] ^= 0x01; // inside the payload
        std::ofstream out(p, std::ios::binary);
        out.write(reinterpret_cast<char*>(bad.data()), (std::streamsize)bad.size());
        out.close();
        CHECK_THROWS_WITH(read_checkpoint(p), Catch::Matchers::ContainsSubstring("CRC"));
    }
    SECTION("truncated file") {
        std::ofstream out(p, std::ios::binary);
        out.write(reinterpret_cast<char*>(bytes.data()), (std::streamsize)(bytes.size() / 2));
        out.close();
        CHECK_THROWS_WITH(read_checkpoint(p), Catch::Matchers::ContainsSubstring("truncated"));
    }
    SECTION("bad magic") {
        auto bad = bytes;
        bad[0] = 'X';
        std::ofstream out(p, std::ios::binary);
        out.write(reinterpret_cast<char*>(bad.data()), (std::streamsize)bad.size());
        out.close();
        CHECK_THROWS_WITH(read_checkpoint(p), Catch::Matchers::ContainsSubstring("magic"));
    }
    SECTION("wrong version") {
        auto bad = bytes;
        bad[4] = 99;
        std::ofstream out(p, std::ios::binary);
        out.write(reinterpret_cast<char*>(bad.data()), (std::streamsize)bad.size());
        out.close();
        CHECK_THROWS_WITH(read_checkpoint(p), Catch::Matchers::ContainsSubstring("version"));
    }
    std::remove(p.c_str());
}

TEST_CASE("shape mismatches on load name the offending tensor") {
    std::vector<CheckpointEntry> entries;
    Rng rng{5};
    entries.push_back(entry_from_tensor("conv.w", Tensor<float>::randn(Shape{3, 3}, rng)));
    std::string p = tmp_path("w2v_ckpt_shape.w2vb");
    write_checkpoint(p, entries);
    auto back = read_checkpoint(p);
    Tensor<float> wrong = Tensor<float>::zeros(Shape{2, 2});
    CHECK_THROWS_WITH(load_entry_into_tensor(back[0], wrong),
                      Catch::Matchers::ContainsSubstring("conv.w"));
    std::remove(p.c_str());
}
