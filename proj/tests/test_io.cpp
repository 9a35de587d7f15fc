#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "ddsr/checkpoint.hpp"
#include "ddsr/image.hpp"
#include "ddsr/train.hpp"

using namespace ddsr;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
    fs::path p = fs::temp_directory_path() / "ddsr_test_io";
    fs::create_directories(p);
    return p;
}

int run_cli(const std::string& args) {
    const char* cli = std::getenv("DDSR_CLI");
    REQUIRE(cli != nullptr);
    std::string cmd = std::string(cli) + " " + args + " >/dev/null 2>&1";
    int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

}  // namespace

TEST_CASE("checkpoint round trip preserves everything") {
    ModelConfig cfg = ModelConfig::toy();
    Model<float> pre = build_model<float>(cfg, 7, false);
    RegimeSetup setup = prepare_regime(Regime::DanP, cfg, &pre, 8);
    Model<float>& model = setup.model;
    // nonzero adapters so the lora path round-trips real data
    Rng rng(9);
    for (auto& [t, a] : model.adapters)
        for (auto& v : a.up.data()) v = static_cast<float>(rng.uniform(-0.1, 0.1));

    fs::path path = scratch_dir() / "roundtrip.ddsr";
    save_checkpoint(path.string(), model);
    Model<float> loaded = load_checkpoint(path.string());

    CHECK(loaded.cfg.arch_equal(model.cfg));
    CHECK(loaded.has_fda == model.has_fda);
    CHECK(loaded.params.names().size() == model.params.names().size());
    for (const auto& n : model.params.names()) {
        REQUIRE(loaded.params.has(n));
        CHECK(loaded.params.at(n).data() == model.params.at(n).data());
    }
    CHECK(loaded.adapters.size() == model.adapters.size());

    // identical forwards
    NoGradGuard ng;
    std::vector<float> img(3 * 8 * 8);
    for (auto& v : img) v = static_cast<float>(rng.uniform(0.0, 1.0));
    auto x = Tensor<float>::from({1, 3, 8, 8}, img);
    auto a = model_forward(model, x);
    auto b = model_forward(loaded, x);
    CHECK(a.scored.data() == b.scored.data());
}

TEST_CASE("merged export drops adapters and preserves the forward") {
    ModelConfig cfg = ModelConfig::toy();
    Model<float> pre = build_model<float>(cfg, 17, false);
    RegimeSetup setup = prepare_regime(Regime::DanP, cfg, &pre, 18);
    Model<float>& model = setup.model;
    Rng rng(19);
    for (auto& [t, a] : model.adapters)
        for (auto& v : a.up.data()) v = static_cast<float>(rng.uniform(-0.1, 0.1));

    std::vector<float> img(3 * 8 * 8);
    for (auto& v : img) v = static_cast<float>(rng.uniform(0.0, 1.0));
    auto x = Tensor<float>::from({1, 3, 8, 8}, img);
    NoGradGuard ng;
    auto before = model_forward(model, x);

    fs::path path = scratch_dir() / "merged.ddsr";
    merge_all_lora(model);
    save_checkpoint(path.string(), model);
    Model<float> loaded = load_checkpoint(path.string());
    CHECK(loaded.adapters.empty());
    for (const auto& n : loaded.params.names())
        CHECK(n.find(".lora.") == std::string::npos);

    auto after = model_forward(loaded, x);
    float max_diff = 0;
    for (size_t i = 0; i < before.scored.data().size(); ++i)
        max_diff = std::max(max_diff,
                            std::abs(before.scored.data()[i] - after.scored.data()[i]));
    CHECK(max_diff < 1e-5f);
}

TEST_CASE("corrupt checkpoints are data errors") {
    fs::path p = scratch_dir() / "garbage.ddsr";
    std::ofstream(p) << "not a checkpoint";
    CHECK_THROWS_AS(load_checkpoint(p.string()), DataError);
    CHECK_THROWS_AS(load_checkpoint((scratch_dir() / "missing.ddsr").string()), DataError);
}

TEST_CASE("png round trip is pixel-stable") {
    Rng rng(23);
    std::vector<float> v(3 * 20 * 24);
    for (auto& x : v) x = static_cast<float>(rng.uniform(-0.2, 1.2));  // exercises clipping
    auto img = Tensor<float>::from({3, 20, 24}, v);
    fs::path p = scratch_dir() / "roundtrip.png";
    write_png(p.string(), img);
    auto back = read_png(p.string());
    CHECK(back.shape() == img.shape());
    // every pixel equals the quantized original
    for (size_t i = 0; i < v.size(); ++i)
        CHECK(back.data()[i] == doctest::Approx(quantize8(v[i]) / 255.0f).epsilon(1e-7));
    // writing the read-back image changes nothing
    fs::path p2 = scratch_dir() / "roundtrip2.png";
    write_png(p2.string(), back);
    auto back2 = read_png(p2.string());
    CHECK(back2.data() == back.data());
}

TEST_CASE("quantization is round-half-up") {
    CHECK(quantize8(0.5f) == 128);
    CHECK(quantize8(0.0f) == 0);
    CHECK(quantize8(1.0f) == 255);
    CHECK(quantize8(-3.0f) == 0);
    CHECK(quantize8(7.0f) == 255);
}

TEST_CASE("cli exit codes") {
    if (!std::getenv("DDSR_CLI")) return;  // only meaningful under ctest
    fs::path out = scratch_dir() / "cli";
    fs::create_directories(out);

    // missing required --out
    CHECK(run_cli("pretrain --iters 1") == 2);
    // unknown flag
    CHECK(run_cli("pretrain --nope 1 --out " + (out / "x").string()) == 2);
    // ret conflicts with --from
    CHECK(run_cli("adapt --regime ret --from somewhere --out " + (out / "y").string()) == 2);
    // dan-p without --from
    CHECK(run_cli("adapt --regime dan-p --out " + (out / "z").string()) == 2);
    // missing checkpoint is a data error
    CHECK(run_cli("eval --ckpt " + (out / "missing.ddsr").string()) == 3);
    // empty data dir
    fs::path empty = out / "empty";
    fs::create_directories(empty);
    ModelConfig cfg = ModelConfig::toy();
    Model<float> m = build_model<float>(cfg, 3, false);
    fs::path ck = out / "toy.ddsr";
    save_checkpoint(ck.string(), m);
    CHECK(run_cli("eval --ckpt " + ck.string() + " --data " + empty.string()) == 3);
}
