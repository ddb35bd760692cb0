#include "selftest.hpp"

#include "mvc/errors.hpp"
#include "mvc/pipeline/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

constexpr int kOk = 0;
constexpr int kInputError = 2;
constexpr int kNumericalError = 3;

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-view consistent noise, attention bias and texture reconstruction"};
    app.require_subcommand(1);
    std::string config_path, scene, out = ".", enhanced;

    auto add_common = [&](CLI::App* sub, bool needs_scene) {
        sub->add_option("--config", config_path, "key=value configuration file")->required();
        auto* s = sub->add_option("--scene", scene, "OBJ path or builtin:sphere|cube|quad");
        if (needs_scene) s->required();
        sub->add_option("--out", out, "output directory");
    };
    auto* render = app.add_subcommand("render", "render conditioning color and normal grids");
    auto* noise = app.add_subcommand("noise", "emit per-view noise (MVCN)");
    auto* bias = app.add_subcommand("bias", "emit per-scale correspondences (MVCB)");
    auto* reconstruct = app.add_subcommand("reconstruct", "recover textures from an enhanced grid");
    auto* selftest = app.add_subcommand("selftest", "run the built-in verification suite");
    for (auto* sub : {render, noise, bias, reconstruct}) add_common(sub, true);
    add_common(selftest, false);
    reconstruct->add_option("--enhanced", enhanced, "enhanced grid image (.png or .pfm)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kInputError;
    }

    try {
        const mvc::PipelineConfig config = mvc::load_config(config_path);
        if (render->parsed()) mvc::cmd_render(config, scene, out);
        else if (noise->parsed()) mvc::cmd_noise(config, scene, out);
        else if (bias->parsed()) mvc::cmd_bias(config, scene, out);
        else if (reconstruct->parsed()) mvc::cmd_reconstruct(config, scene, enhanced, out);
        else if (selftest->parsed()) return mvc::run_selftest(config, std::cout) ? kOk : kNumericalError;
        return kOk;
    } catch (const mvc::InputError& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return kInputError;
    } catch (const mvc::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kNumericalError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
