// Copyright Contributors to the DiscSplat Project
// SPDX-License-Identifier: Apache-2.0

// discsplat command-line tool: fit, render, eval, project and the check
// harnesses. Exit codes: 0 ok, 1 check failed, 2 input, 3 config, 4 mode,
// 5 shape.

#include "discsplat/fit.hpp"
#include "discsplat/image_io.hpp"
#include "discsplat/metrics.hpp"
#include "discsplat/projection.hpp"
#include "discsplat/rasterizer.hpp"
#include "discsplat/scene.hpp"
#include "harness.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace discsplat;

namespace {

enum ExitCode { kOk = 0, kCheckFailed = 1, kInput = 2, kConfig = 3, kMode = 4, kShape = 5 };

struct CliError {
    int code;
    std::string message;
};

[[noreturn]] void fail(int code, std::string message) { throw CliError{code, std::move(message)}; }

void require_file(const fs::path &p, const char *what) {
    std::error_code ec;
    if (!fs::is_regular_file(p, ec)) fail(kInput, std::string(what) + " '" + p.string() + "' is not a readable file");
}

void require_parent(const fs::path &p) {
    const fs::path parent = p.parent_path();
    std::error_code ec;
    if (!parent.empty() && !fs::is_directory(parent, ec)) {
        fail(kInput, "output directory '" + parent.string() + "' does not exist");
    }
}

void write_text(const fs::path &p, const std::string &text) {
    std::ofstream os(p, std::ios::binary);
    os << text;
    if (!os) fail(kInput, "cannot write '" + p.string() + "'");
}

// ------------------------------------------------------------------ fit

struct FitArgs {
    std::string target, out, config;
    std::optional<int> splats, curves, iters;
    std::optional<std::uint64_t> seed;
    bool baseline = false;
};

int run_fit(const FitArgs &a) {
    require_file(a.target, "target");
    if (!a.config.empty()) require_file(a.config, "config");
    const Image target = read_png(a.target);

    FitConfig cfg = a.config.empty() ? FitConfig{} : read_fit_config(a.config);
    if (a.splats) cfg.splats = *a.splats;
    if (a.curves) cfg.M = *a.curves;
    if (a.iters) cfg.iters = *a.iters;
    if (a.seed) cfg.seed = *a.seed;
    if (a.baseline) cfg.baseline = true;
    validate(cfg);

    const fs::path out(a.out);
    std::error_code ec;
    fs::create_directories(out, ec);
    if (!fs::is_directory(out)) fail(kInput, "cannot create output directory '" + out.string() + "'");

    FitCallbacks cb;
    cb.on_checkpoint = [&](const FitCheckpoint &cp, const Image &render) {
        char name[40];
        std::snprintf(name, sizeof name, "checkpoint_%05d.png", cp.iteration);
        write_png(render, out / name);
    };
    FitResult r = fit(target, cfg, cb);
    const fs::path scene_path = out / "scene.json";
    write_scene(r.scene, scene_path);
    r.report.scene_path = scene_path.string();
    write_text(out / "report.csv", report_csv(r.report));
    write_text(out / "config.json", fit_config_to_json(cfg));
    write_png(r.final_render, out / "final.png");
    std::cout << report_summary(r.report);
    return kOk;
}

// --------------------------------------------------------------- render

struct RenderArgs {
    std::string scene, out, camera;
    std::optional<int> width, height;
};

int run_render(const RenderArgs &a) {
    require_file(a.scene, "scene");
    if (!a.camera.empty()) require_file(a.camera, "camera");
    require_parent(a.out);
    const Scene scene = read_scene(a.scene);

    std::optional<Camera> cam;
    if (scene.mode == SceneMode::flat2d) {
        if (!a.camera.empty()) std::cerr << "warning: flat2d scene, --camera ignored\n";
    } else {
        if (a.camera.empty()) fail(kMode, "3D scenes need --camera");
        cam = read_camera(a.camera);
    }
    const int w = a.width ? *a.width : (cam ? cam->width : 0);
    const int h = a.height ? *a.height : (cam ? cam->height : 0);
    if (w <= 0 || h <= 0) fail(kInput, "image size unknown: pass --width and --height");

    const RenderTape tape = render_scene(scene, w, h, RasterConfig{}, cam ? &*cam : nullptr);
    write_png(tape.image, a.out);
    return kOk;
}

// ----------------------------------------------------------------- eval

int run_eval(const std::string &render_path, const std::string &target_path) {
    require_file(render_path, "render");
    require_file(target_path, "target");
    const Image render = read_png(render_path);
    const Image target = read_png(target_path);
    const Metrics m = metrics(render, target);
    std::printf("PSNR %.4f dB\nSSIM %.6f\n", m.psnr, m.ssim);
    return kOk;
}

// -------------------------------------------------------------- project

int run_project(const std::string &scene_path, const std::string &camera_path, const std::string &out) {
    require_file(scene_path, "scene");
    require_file(camera_path, "camera");
    require_parent(out);
    const Scene scene = read_scene(scene_path);
    if (scene.mode == SceneMode::flat2d) fail(kMode, "project needs a 3D scene");
    const Camera cam = read_camera(camera_path);

    nlohmann::json j;
    j["width"] = cam.width;
    j["height"] = cam.height;
    j["splats"] = nlohmann::json::array();
    for (const ProjectedSplat &ps : prepare(scene, &cam, cam.width, cam.height)) {
        nlohmann::json s;
        s["source"] = ps.source;
        s["depth"] = ps.depth_key;
        s["mu2d"] = {ps.mu2d.x, ps.mu2d.y};
        s["cov2d"] = {ps.cov2d.xx, ps.cov2d.xy, ps.cov2d.yy};
        s["alpha"] = ps.alpha;
        s["color"] = ps.color;
        nlohmann::json pts = nlohmann::json::array();
        for (const Vec2 &p : ps.curve_points) pts.push_back({p.x, p.y});
        s["curve_points"] = pts;
        j["splats"].push_back(s);
    }
    write_text(out, j.dump(2) + "\n");
    return kOk;
}

int report(const checks::CheckTable &t) {
    std::cout << t.format();
    return t.pass() ? kOk : kCheckFailed;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Gaussian splatting with Bezier scissor curves"};
    app.require_subcommand(1);

    FitArgs fa;
    auto *fit_cmd = app.add_subcommand("fit", "Fit splats to a target image");
    fit_cmd->add_option("--target", fa.target, "Target PNG")->required();
    fit_cmd->add_option("--out", fa.out, "Output directory")->required();
    fit_cmd->add_option("--config", fa.config, "FitConfig JSON");
    fit_cmd->add_option("--splats", fa.splats, "Initial splat count");
    fit_cmd->add_option("--curves", fa.curves, "Curves per splat (M)");
    fit_cmd->add_option("--iters", fa.iters, "Iterations");
    fit_cmd->add_option("--seed", fa.seed, "Random seed");
    fit_cmd->add_flag("--baseline", fa.baseline, "Freeze curves and render without scissoring");

    RenderArgs ra;
    auto *render_cmd = app.add_subcommand("render", "Render a scene to PNG");
    render_cmd->add_option("--scene", ra.scene, "Scene JSON")->required();
    render_cmd->add_option("--out", ra.out, "Output PNG")->required();
    render_cmd->add_option("--camera", ra.camera, "Camera JSON (3D scenes)");
    render_cmd->add_option("--width", ra.width, "Image width");
    render_cmd->add_option("--height", ra.height, "Image height");

    std::string eval_render, eval_target;
    auto *eval_cmd = app.add_subcommand("eval", "PSNR and SSIM of a render against a target");
    eval_cmd->add_option("--render", eval_render, "Rendered PNG")->required();
    eval_cmd->add_option("--target", eval_target, "Target PNG")->required();

    std::string proj_scene, proj_camera, proj_out;
    auto *project_cmd = app.add_subcommand("project", "Write the image-plane splats of a 3D scene as JSON");
    project_cmd->add_option("--scene", proj_scene, "Scene JSON")->required();
    project_cmd->add_option("--camera", proj_camera, "Camera JSON")->required();
    project_cmd->add_option("--out", proj_out, "Output JSON")->required();

    checks::GradCheckOptions go;
    auto *grad_cmd = app.add_subcommand("grad-check", "Analytic gradients against finite differences");
    grad_cmd->add_option("--seed", go.seed);
    grad_cmd->add_option("--scenes", go.scenes)->check(CLI::PositiveNumber);

    checks::ImplicitCheckOptions io;
    auto *imp_cmd = app.add_subcommand("implicit-check", "Implicit form residuals on parametric samples");
    imp_cmd->add_option("--seed", io.seed);
    imp_cmd->add_option("--curves", io.curves)->check(CLI::PositiveNumber);

    checks::SolverCheckOptions so;
    auto *sol_cmd = app.add_subcommand("solver-check", "Cubic roots against bisection and companion oracles");
    sol_cmd->add_option("--seed", so.seed);
    sol_cmd->add_option("--sets", so.sets)->check(CLI::PositiveNumber);

    checks::CrossingCheckOptions co;
    auto *cross_cmd = app.add_subcommand("crossing-check", "Curves rebuilt from crossing values pass the pixel");
    cross_cmd->add_option("--seed", co.seed);
    cross_cmd->add_option("--queries", co.queries)->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kInput;
    }

    try {
        if (*fit_cmd) return run_fit(fa);
        if (*render_cmd) return run_render(ra);
        if (*eval_cmd) return run_eval(eval_render, eval_target);
        if (*project_cmd) return run_project(proj_scene, proj_camera, proj_out);
        if (*grad_cmd) return report(checks::grad_check(go));
        if (*imp_cmd) return report(checks::implicit_check(io));
        if (*sol_cmd) return report(checks::solver_check(so));
        if (*cross_cmd) return report(checks::crossing_check(co));
    } catch (const CliError &e) {
        std::cerr << "error: " << e.message << '\n';
        return e.code;
    } catch (const ConfigError &e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const ShapeError &e) {
        std::cerr << "shape error: " << e.what() << '\n';
        return kShape;
    } catch (const ImageIoError &e) {
        std::cerr << "input error: " << e.what() << '\n';
        return kInput;
    } catch (const SceneError &e) {
        std::cerr << "scene error: " << e.what() << '\n';
        return kInput;
    } catch (const CameraError &e) {
        std::cerr << "camera error: " << e.what() << '\n';
        return kInput;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << '\n';
        return kCheckFailed;
    }
    return kOk;
}
