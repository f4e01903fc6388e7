#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "rdstn/checkpoint.hpp"
#include "rdstn/errors.hpp"
#include "support/models.hpp"
#include "support/synthetic.hpp"
#include "support/tempdir.hpp"

using namespace rdstn;

namespace {

RunConfig small_run() {
    RunConfig cfg;
    cfg.model = testing::tiny_model(8, {16, 16});
    cfg.train.steps = 7;
    cfg.train.seed = 11;
    return cfg;
}

Checkpoint sample_checkpoint(const Model& model, const RunConfig& cfg) {
    auto optim = AdamState::zeros_like(model);
    optim.step = 4;
    for (auto& m : optim.m) m.fill(0.25);
    for (auto& v : optim.v) v.fill(1e-7);
    nlohmann::json history = nlohmann::json::array({{{"step", 4}, {"mean_psnr", 21.5}}});
    return make_checkpoint(model, &optim, cfg, 4, history, {0.5, 0.25, 0.125, 0.1});
}

}  // namespace

TEST_CASE("checkpoint round trip is bit exact") {
    testing::TempDir dir;
    auto cfg = small_run();
    auto model = Model::create(cfg.model, 1);
    testing::perturb(model, 1);
    auto ckpt = sample_checkpoint(model, cfg);
    save_checkpoint(ckpt, dir.path() / "a.ckpt");
    auto loaded = load_checkpoint(dir.path() / "a.ckpt");

    CHECK(loaded.step == 4);
    CHECK(loaded.loss_history == ckpt.loss_history);
    CHECK(loaded.metric_history == ckpt.metric_history);
    CHECK(loaded.config.model == cfg.model);
    CHECK(loaded.config.train == cfg.train);
    CHECK(content_checksum(loaded) == content_checksum(ckpt));

    auto restored = restore_model(loaded);
    auto img = testing::random_image(1, 9, 7, 2);
    CHECK(upscale(img, restored, 20, 15) == upscale(img, model, 20, 15));

    auto optim = restore_optimizer(loaded, restored);
    CHECK(optim.step == 4);
    CHECK(optim.m[0](0, 0) == 0.25);
    CHECK(optim.v[0](0, 0) == 1e-7);
}

TEST_CASE("compact float32 export stays close") {
    testing::TempDir dir;
    auto cfg = small_run();
    auto model = Model::create(cfg.model, 2);
    auto ckpt = sample_checkpoint(model, cfg);
    save_checkpoint(ckpt, dir.path() / "f32.ckpt", ArrayDtype::f32);
    CHECK(std::filesystem::file_size(dir.path() / "f32.ckpt") < [&] {
        save_checkpoint(ckpt, dir.path() / "f64.ckpt");
        return std::filesystem::file_size(dir.path() / "f64.ckpt");
    }());
    auto restored = restore_model(load_checkpoint(dir.path() / "f32.ckpt"));
    auto a = model.parameters(), b = restored.parameters();
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t k = 0; k < a[i].var.value().size(); ++k)
            CHECK(b[i].var.value().values()[k] == doctest::Approx(a[i].var.value().values()[k]).epsilon(1e-6));
}

TEST_CASE("loading into a different architecture is a config mismatch") {
    auto cfg = small_run();
    auto model = Model::create(cfg.model, 3);
    auto ckpt = sample_checkpoint(model, cfg);
    auto other_cfg = cfg.model;
    other_cfg.encoder.dim = 12;
    other_cfg.encoder.heads = 3;
    auto other = Model::create(other_cfg, 3);
    auto before = other.parameters()[0].var.value();
    CHECK_THROWS_AS(load_parameters(other, ckpt), ConfigMismatch);
    CHECK(other.parameters()[0].var.value().values() == before.values());

    auto no_gff = cfg.model;
    no_gff.encoder.use_gff = false;
    auto third = Model::create(no_gff, 3);
    CHECK_THROWS_AS(load_parameters(third, ckpt), ConfigMismatch);
}

TEST_CASE("truncated or corrupted files fail the checksum") {
    testing::TempDir dir;
    auto cfg = small_run();
    auto model = Model::create(cfg.model, 4);
    save_checkpoint(sample_checkpoint(model, cfg), dir.path() / "ok.ckpt");
    const auto size = std::filesystem::file_size(dir.path() / "ok.ckpt");

    for (auto keep : {size - 1, size / 2, std::uintmax_t{12}, std::uintmax_t{3}}) {
        std::filesystem::copy_file(dir.path() / "ok.ckpt", dir.path() / "cut.ckpt",
                                   std::filesystem::copy_options::overwrite_existing);
        std::filesystem::resize_file(dir.path() / "cut.ckpt", keep);
        CHECK_THROWS_AS(load_checkpoint(dir.path() / "cut.ckpt"), ChecksumError);
    }

    std::filesystem::copy_file(dir.path() / "ok.ckpt", dir.path() / "flip.ckpt");
    {
        std::fstream f(dir.path() / "flip.ckpt", std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(static_cast<std::streamoff>(size - 5));
        f.put('\x5a');
    }
    CHECK_THROWS_AS(load_checkpoint(dir.path() / "flip.ckpt"), ChecksumError);
    CHECK_THROWS_AS(load_checkpoint(dir.path() / "absent.ckpt"), IoError);
}

TEST_CASE("content checksum tracks parameters only") {
    auto cfg = small_run();
    auto model = Model::create(cfg.model, 5);
    auto a = sample_checkpoint(model, cfg);
    auto b = a;
    b.loss_history.push_back(9.0);
    CHECK(content_checksum(a) == content_checksum(b));
    b.arrays[0].values(0, 0) += 1e-12;
    CHECK(content_checksum(a) != content_checksum(b));
    CHECK(content_checksum(a).rfind("crc32:", 0) == 0);
}
