// Acceptance checks: one PASS / FAIL / SKIP line per criterion.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include "rdstn/checkpoint.hpp"
#include "rdstn/evaluation.hpp"
#include "rdstn/training.hpp"
#include "support/chessboard.hpp"
#include "support/gradcheck.hpp"
#include "support/models.hpp"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"

using namespace rdstn;

namespace {

enum class Verdict { pass, fail, skip };

struct Outcome {
    Verdict verdict;
    std::string detail;
};

Outcome judge(bool ok, std::string detail) { return {ok ? Verdict::pass : Verdict::fail, std::move(detail)}; }

template <class... Args>
std::string fmt(const char* f, Args... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

RunConfig toy_config() {
    std::ifstream in(RDSTN_TOY_CONFIG);
    return run_config_from_json(nlohmann::json::parse(in));
}

// Small enough that one LR patch covers a whole image at x2.
std::vector<Image> toy_images(int size = 32) {
    return {testing::synthetic_scene(size, size, 1), testing::synthetic_scene(size, size, 2)};
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
    return m;
}

Outcome global_window_attention() {
    std::mt19937_64 rng(1);
    double worst = 0.0;
    int cases = 0;
    for (int trial = 0; trial < 24; ++trial) {
        const int heads = 1 << (rng() % 3);
        const int d = heads * (1 + static_cast<int>(rng() % (16 / heads)));
        const int m = 1 + static_cast<int>(rng() % 6);
        Rng init(100 + trial);
        WindowAttentionParams p;
        p.qkv = init_linear_uniform(d, 3 * d, init);
        p.proj = init_linear_uniform(d, d, init);
        p.bias_table = init_linear_uniform(static_cast<std::size_t>((2 * m - 1) * (2 * m - 1)), heads, init).weight;
        Matrix x(static_cast<std::size_t>(m * m), d);
        std::normal_distribution<double> n(0.0, 1.0);
        for (double& v : x.values()) v = n(rng);
        auto out = window_attention(WindowStack{ag::Var(x), m, 1}, p, Matrix(), heads);
        worst = std::max(worst, max_abs_diff(out.tokens.value(), testing::dense_mhsa(x, p, heads, m)));
        ++cases;
    }
    return judge(worst < 1e-6, fmt("%d cases, max diff %.2e", cases, worst));
}

Outcome toy_gradient_check() {
    ModelConfig mc = testing::tiny_model(8, {32, 32});
    mc.encoder.blocks = 2;
    mc.encoder.window = 4;
    Model model = Model::create(mc, 3);
    testing::perturb(model, 5, 0.3);
    TrainConfig t;
    t.patch = 6;
    t.k_samples = 16;
    t.batch = 2;
    std::vector<Image> imgs{testing::synthetic_scene(32, 32, 1)};
    auto batch = sample_batch(imgs, t, 0);
    std::vector<std::pair<std::string, ag::Var>> params;
    for (auto& p : model.parameters()) params.push_back({p.name, p.var});
    auto r = testing::check_gradients(params, [&] { return batch_loss(model, batch); }, 1e-5);
    return judge(r.max_rel_error < 1e-4,
                 fmt("%zu entries, max relative error %.2e (%s)", r.checked, r.max_rel_error, r.worst.c_str()));
}

Outcome ensemble_is_bilinear() {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    double worst = 0.0, worst_sum = 0.0;
    auto frac = [](double coord, int n) {
        const double t = (coord + 1.0) / 2.0 * n - 0.5;
        if (t <= 0.0) return 0.0;
        if (t >= n - 1) return 0.0;
        return t - std::floor(t);
    };
    for (int i = 0; i < 10000; ++i) {
        const int gh = 1 + static_cast<int>(rng() % 32), gw = 1 + static_cast<int>(rng() % 32);
        QueryPoint q{u(rng), u(rng)};
        auto w = ensemble_weights(q, surrounding_latents(gh, gw, q));
        const double fy = frac(q.y, gh), fx = frac(q.x, gw);
        const double expect[4] = {(1 - fy) * (1 - fx), (1 - fy) * fx, fy * (1 - fx), fy * fx};
        double sum = 0.0;
        for (int k = 0; k < 4; ++k) {
            worst = std::max(worst, std::abs(w.w[k] - expect[k]));
            sum += w.w[k];
        }
        worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
    }
    return judge(worst < 1e-12 && worst_sum <= 1e-15,
                 fmt("1e4 queries, max weight diff %.2e, max |sum - 1| %.2e", worst, worst_sum));
}

Outcome chessboard_continuity() {
    DecoderConfig cfg;
    cfg.hidden = {32, 32};
    Rng init(9);
    auto params = init_decoder(cfg, 4, init);
    FeatureMap latent;
    latent.height = 8;
    latent.width = 8;
    Matrix tokens(64, 4);
    std::normal_distribution<double> n(0.0, 1.0);
    for (double& v : tokens.values()) v = n(init);
    latent.tokens = ag::Var(tokens);
    std::mt19937_64 rng(10);
    int good = 0;
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        auto j = testing::boundary_jump(latent, params, cfg, rng);
        worst = std::max(worst, j.ensemble);
        if (j.ensemble < 1e-4 && j.plain >= 10.0 * j.ensemble) ++good;
    }
    return judge(worst < 1e-4 && good >= 95,
                 fmt("max ensemble jump %.2e, %d/100 boundaries with plain jump >= 10x", worst, good));
}

Outcome encoder_keeps_resolution() {
    int checked = 0, bad = 0;
    for (int m : {4, 8}) {
        auto cfg = testing::tiny_encoder(4, 1, 2, m, 2);
        Rng rng(11);
        auto params = init_encoder(cfg, rng);
        for (int h = 3; h <= 17; ++h)
            for (int w = 3; w <= 17; ++w) {
                auto img = testing::random_image(1, h, w, static_cast<unsigned>(h * 31 + w));
                auto f = encode(img, params, cfg);
                ++checked;
                if (f.height != h || f.width != w || f.tokens.rows() != static_cast<std::size_t>(h * w)) ++bad;
            }
    }
    return judge(bad == 0, fmt("%d shapes, %d mismatched", checked, bad));
}

Outcome overfit_two_images() {
    RunConfig cfg = toy_config();
    auto imgs = toy_images();
    // Fixed probe batch so initial and final losses measure the same thing.
    auto probe = sample_batch(imgs, cfg.train, 1'000'000);
    Model init = Model::create(cfg.model, cfg.train.seed);
    double initial;
    {
        ag::NoGradGuard g;
        initial = batch_loss(init, probe).value()(0, 0);
    }
    auto res = fit(cfg, imgs, {});
    Model model = restore_model(res.last);
    double final_loss;
    {
        ag::NoGradGuard g;
        final_loss = batch_loss(model, probe).value()(0, 0);
    }
    SweepOptions so;
    so.scales = {2.0};
    const double bic = eval_scale_sweep(imgs, "bicubic", nullptr, so)[0].psnr_db;
    const double sr = eval_scale_sweep(imgs, "rdstn", &model, so)[0].psnr_db;
    return judge(final_loss <= 0.5 * initial && sr >= bic + 1.0,
                 fmt("%d steps, L1 %.4f -> %.4f, x2 PSNR %.2f dB vs bicubic %.2f dB", cfg.train.steps, initial,
                     final_loss, sr, bic));
}

// Short U(1,4) toy runs of every fusion setting; the S4 model is reused below.
std::optional<Model> g_s4;

Outcome ablation_settings() {
    RunConfig base = toy_config();
    base.train.steps = 100;
    base.train.scale_min = 1.0;
    base.train.scale_max = 4.0;
    auto imgs = toy_images(64);
    std::size_t params[4];
    std::string log;
    bool finite = true;
    for (int s = 0; s < 4; ++s) {
        RunConfig c = base;
        auto setting = static_cast<AblationSetting>(s);
        c.train.ablation = setting;
        c.model.encoder = apply_ablation_setting(setting, c.model.encoder);
        try {
            auto res = fit(c, imgs, {});
            Model m = restore_model(res.last);
            params[s] = count_parameters(m);
            const double last = res.loss_history.back();
            finite = finite && std::isfinite(last);
            log += fmt(" %s:%zu/%.4f", to_string(setting).c_str(), params[s], last);
            if (s == 3) g_s4 = m;
        } catch (const std::exception& e) {
            finite = false;
            params[s] = 0;
            log += fmt(" %s:diverged(%s)", to_string(setting).c_str(), e.what());
        }
    }
    const auto d = static_cast<std::size_t>(base.model.encoder.dim);
    const auto n = static_cast<std::size_t>(base.model.encoder.stages);
    const bool order = params[3] > params[2] && params[3] > params[1] && params[1] > params[0];
    const bool closed = params[3] - params[2] == (n + 1) * d * d + d;
    return judge(finite && order && closed, "params/final loss" + log +
                                                fmt(", S4-S3 = %zu (expect %zu)", params[3] - params[2],
                                                    (n + 1) * d * d + d));
}

Outcome out_of_range_scales() {
    if (!g_s4) return {Verdict::fail, "no U(1,4) model (ablation runs failed)"};
    auto img = testing::synthetic_scene(24, 20, 5);
    std::string log;
    bool ok = true;
    for (double s : {1.3, 2.7, 6.0, 10.0}) {
        const int th = static_cast<int>(std::lround(s * img.height)), tw = static_cast<int>(std::lround(s * img.width));
        auto out = upscale(img, *g_s4, th, tw);
        bool valid = out.height == th && out.width == tw;
        for (double v : out.values) valid = valid && std::isfinite(v) && v >= 0.0 && v <= 1.0;
        ok = ok && valid;
        log += fmt(" x%.1f:%dx%d%s", s, out.height, out.width, valid ? "" : "(invalid)");
    }
    return judge(ok, "24x20 input ->" + log);
}

Outcome busi_bicubic() {
    const char* dir = std::getenv("RDSTN_BUSI_DIR");
    if (!dir || !std::filesystem::is_directory(dir)) return {Verdict::skip, "RDSTN_BUSI_DIR not set"};
    auto split = split_dataset(dir, 0.8, 0);
    auto loaded = load_images(split.test_paths, 1);
    SweepOptions so;
    so.scales = {4.0};
    const double p = eval_scale_sweep(loaded.images, "bicubic", nullptr, so)[0].psnr_db;
    return judge(std::abs(p - 30.40) <= 1.5,
                 fmt("%zu test images, bicubic x4 %.2f dB (target 30.40 +- 1.5)", loaded.images.size(), p));
}

Outcome determinism() {
    RunConfig cfg = toy_config();
    auto imgs = toy_images();
    auto a = fit(cfg, imgs, {});
    auto b = fit(cfg, imgs, {});
    const auto ca = content_checksum(a.last), cb = content_checksum(b.last);
    return judge(a.loss_history == b.loss_history && ca == cb,
                 fmt("%d steps, loss traces %s, checksums %s / %s", cfg.train.steps,
                     a.loss_history == b.loss_history ? "identical" : "differ", ca.c_str(), cb.c_str()));
}

}  // namespace

int main() {
    struct Criterion {
        const char* name;
        std::function<Outcome()> run;
        double limit_secs;  // 0: no limit
    };
    const Criterion criteria[] = {
        {"single window attention equals dense multi-head attention", global_window_attention, 60},
        {"toy model gradients match central differences", toy_gradient_check, 300},
        {"ensemble weights equal bilinear coefficients", ensemble_is_bilinear, 0},
        {"local ensemble removes boundary jumps", chessboard_continuity, 0},
        {"encoder keeps the input resolution", encoder_keeps_resolution, 0},
        {"toy model overfits two images", overfit_two_images, 600},
        {"fusion ablations train and have ordered sizes", ablation_settings, 0},
        {"U(1,4) model handles out-of-range scales", out_of_range_scales, 0},
        {"bicubic x4 on BUSI matches the reference", busi_bicubic, 0},
        {"identical runs are bit-identical", determinism, 0},
    };
    int failed = 0, index = 0;
    for (const auto& [name, run, limit] : criteria) {
        ++index;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {Verdict::fail, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (limit > 0 && secs > limit && o.verdict == Verdict::pass)
            o = {Verdict::fail, o.detail + fmt(", over the %.0f s limit", limit)};
        const char* tag = o.verdict == Verdict::pass ? "PASS" : o.verdict == Verdict::fail ? "FAIL" : "SKIP";
        if (o.verdict == Verdict::fail) ++failed;
        std::cout << tag << " " << index << " " << name << ": " << o.detail << fmt(" [%.1f s]", secs) << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
