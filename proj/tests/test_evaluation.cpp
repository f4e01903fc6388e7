#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "rdstn/errors.hpp"
#include "rdstn/evaluation.hpp"
#include "rdstn/training.hpp"
#include "support/models.hpp"
#include "support/synthetic.hpp"
#include "support/tempdir.hpp"

using namespace rdstn;

TEST_CASE("psnr examples") {
    auto gt = testing::random_image(1, 8, 8, 1);
    CHECK(std::isinf(psnr(gt, gt)));
    Image a(1, 4, 4, 0.5), b(1, 4, 4, 0.6);
    CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-12));
    Image zero(1, 4, 4, 0.0), one(1, 4, 4, 1.0);
    CHECK(psnr(zero, one) == 0.0);
    CHECK_THROWS_AS(psnr(zero, Image(1, 4, 5, 0.0)), InvalidArgument);
}

TEST_CASE("psnr symmetry, permutation invariance and monotonicity") {
    auto x = testing::random_image(1, 10, 10, 2), y = testing::random_image(1, 10, 10, 3);
    CHECK(psnr(x, y) == psnr(y, x));
    Image px = x, py = y;
    std::reverse(px.values.begin(), px.values.end());
    std::reverse(py.values.begin(), py.values.end());
    CHECK(psnr(px, py) == doctest::Approx(psnr(x, y)).epsilon(1e-14));
    Image base(1, 4, 4, 0.5);
    double prev = INFINITY;
    for (double e : {0.01, 0.02, 0.05, 0.1, 0.3}) {
        Image off(1, 4, 4, 0.5 + e);
        const double p = psnr(off, base);
        CHECK(p < prev);
        prev = p;
    }
}

TEST_CASE("bicubic sweep: identity at scale 1, monotone, deterministic") {
    std::vector<Image> imgs;
    for (unsigned i = 0; i < 4; ++i) imgs.push_back(testing::synthetic_scene(48, 40, i));
    SweepOptions opts;
    opts.scales = {1.0, 1.6, 2.0, 3.0, 4.0};
    auto rows = eval_scale_sweep(imgs, "bicubic", nullptr, opts);
    REQUIRE(rows.size() == 5);
    CHECK(std::isinf(rows[0].psnr_db));
    for (std::size_t i = 2; i < rows.size(); ++i) CHECK(rows[i].psnr_db < rows[i - 1].psnr_db);
    for (const auto& r : rows) CHECK(r.n_images == 4);
    CHECK(eval_scale_sweep(imgs, "bicubic", nullptr, opts) == rows);
    CHECK(degraded_size(100, 2.5) == 40);
    CHECK(degraded_size(3, 10.0) == 1);
    CHECK_THROWS_AS(eval_scale_sweep({}, "bicubic", nullptr, opts), EmptyDataset);
}

TEST_CASE("noise lowers psnr for every method") {
    std::vector<Image> imgs;
    for (unsigned i = 0; i < 50; ++i) imgs.push_back(testing::synthetic_scene(24, 24, 100 + i));
    // A briefly trained model, so its output actually follows the input.
    RunConfig cfg;
    cfg.model = testing::tiny_model(8, {16, 16});
    cfg.train.patch = 8;
    cfg.train.k_samples = 64;
    cfg.train.batch = 2;
    cfg.train.steps = 60;
    cfg.train.lr = 3e-3;
    cfg.train.scale_max = 3.0;
    const Model model = restore_model(fit(cfg, imgs, {}).last);
    SweepOptions clean;
    clean.scales = {2.0, 3.0};
    SweepOptions noisy = clean;
    noisy.noise_sigma = 0.05;
    for (const Model* m : std::vector<const Model*>{nullptr, &model}) {
        auto a = eval_scale_sweep(imgs, "m", m, clean);
        auto b = eval_scale_sweep(imgs, "m", m, noisy);
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(b[i].psnr_db < a[i].psnr_db);
            CHECK(b[i].sigma == 0.05);
        }
    }
}

TEST_CASE("generalization eval over a directory") {
    testing::TempDir dir;
    CHECK_THROWS_AS(generalization_eval({{"bicubic", nullptr}}, dir.path(), 1, SweepOptions{{2.0}}), EmptyDataset);
    std::vector<Image> imgs;
    for (unsigned i = 0; i < 3; ++i) {
        imgs.push_back(testing::synthetic_scene(30, 30, i));
        save_png(imgs.back(), dir.path() / ("t" + std::to_string(i) + ".png"), 16);
    }
    std::ofstream(dir.path() / "broken.png") << "not a png";
    SweepOptions opts;
    opts.scales = {1.6, 1.7, 1.8, 1.9, 2.0};
    auto model = Model::create(testing::tiny_model(8, {16}), 2);
    auto table = generalization_eval({{"bicubic", nullptr}, {"rdstn", &model}}, dir.path(), 1, opts);
    CHECK(table.rows.size() == 10);
    CHECK(table.metadata["skipped_images"] == 1);

    auto loaded = load_images(discover_images(dir.path()), 1);
    auto direct = eval_scale_sweep(loaded.images, "bicubic", nullptr, opts);
    for (std::size_t i = 0; i < direct.size(); ++i) CHECK(table.rows[i].psnr_db == direct[i].psnr_db);
}

TEST_CASE("reports: rows, best flags and json round trip") {
    BenchmarkTable t;
    for (const char* m : {"bicubic", "rdstn"})
        for (double s : {2.0, 3.0, 4.0}) t.rows.push_back({m, s, 30.0 - s + (m[0] == 'r' ? 0.5 : 0.0), 5, 0.0, false});
    t.rows[2].psnr_db = t.rows[5].psnr_db;  // tie at x4
    t.metadata["dataset"] = "synthetic";
    finalize_table(t);
    for (const auto& r : t.rows) {
        if (r.scale == 4.0) CHECK(r.best);
        else CHECK(r.best == (r.method == "rdstn"));
    }

    testing::TempDir dir;
    emit_report(t, dir.path());
    std::ifstream csv(dir.path() / "report.csv");
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(csv, line)) lines.push_back(line);
    REQUIRE(lines.size() == 7);
    CHECK(lines[0] == "method,scale,psnr_db,n_images,sigma");

    auto j = table_to_json(t);
    CHECK(table_to_json(table_from_json(j)) == j);
    std::ifstream js(dir.path() / "report.json");
    CHECK(nlohmann::json::parse(js) == j);

    BenchmarkTable inf;
    inf.rows.push_back({"bicubic", 1.0, INFINITY, 2, 0.0, false});
    finalize_table(inf);
    auto ij = table_to_json(inf);
    CHECK(ij["rows"][0]["identical"] == true);
    CHECK(std::isinf(table_from_json(ij).rows[0].psnr_db));
    CHECK(table_to_csv(inf).find("inf") != std::string::npos);
}
