#include <cstdio>
#include <cstdlib>
#include <string>

#if defined(__x86_64__) && defined(__linux__)
#include <csetjmp>
#include <csignal>
#include <unistd.h>
#endif

#include "CLI11.hpp"
#include "scnfusion/pipeline.hpp"

namespace {

#if defined(__x86_64__) && defined(__linux__)
sigjmp_buf g_sigill_jmp;
void on_sigill(int) { siglongjmp(g_sigill_jmp, 1); }

// Some hypervisors mask AVX-512 in CPUID while the hardware still executes
// it, which strands OpenBLAS's dynamic dispatch on generic SSE2 kernels and
// slows training several-fold. Probe by executing EVEX instructions under a
// SIGILL guard; on success, re-exec once with the kernel family pinned.
bool avx512_executes() {
    struct sigaction sa = {}, old = {};
    sa.sa_handler = on_sigill;
    sigaction(SIGILL, &sa, &old);
    bool ok = false;
    if (!sigsetjmp(g_sigill_jmp, 1)) {
        asm volatile("vpxord %%zmm0, %%zmm0, %%zmm0" ::: "memory");  // AVX512F
        asm volatile("vpxord %%xmm17, %%xmm17, %%xmm17" ::: "memory");  // AVX512VL
        ok = true;
    }
    sigaction(SIGILL, &old, nullptr);
    return ok;
}

void pin_blas_kernels(char** argv) {
    if (std::getenv("OPENBLAS_CORETYPE")) return;
    if (!avx512_executes()) return;
    setenv("OPENBLAS_CORETYPE", "SKYLAKEX", 1);
    execv("/proc/self/exe", argv);  // on failure, continue with generic kernels
}
#else
void pin_blas_kernels(char**) {}
#endif

struct CommonOpts {
    std::string config_path;
    int jobs = 1;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string ablation;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "JSON run configuration")
        ->required();
    cmd->add_option("--jobs", opts.jobs, "worker pool size (1 = serial)")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--seed", opts.seed, "override the master seed")
        ->each([&](const std::string&) { opts.seed_set = true; });
    cmd->add_option("--ablation", opts.ablation, "ablation switch")
        ->check(CLI::IsMember({"no_aux", "no_ensemble"}));
}

scnfusion::RunConfig load(const CommonOpts& opts) {
    scnfusion::CliOverrides ov;
    if (opts.seed_set) ov.seed = opts.seed;
    ov.ablation = opts.ablation;
    if (const char* env = std::getenv("SCNFUSION_OUT"); env && *env)
        ov.out_dir = env;
    return scnfusion::load_run_config(opts.config_path, ov);
}

}  // namespace

int main(int argc, char** argv) {
    pin_blas_kernels(argv);

    CLI::App app{"structural covariance fusion pipeline"};
    app.require_subcommand(1);

    CommonOpts opts;
    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic cohort");
    CLI::App* extract = app.add_subcommand("extract", "volumes -> features CSV");
    CLI::App* train = app.add_subcommand("train", "cross-validated training");
    CLI::App* explain =
        app.add_subcommand("explain", "relevance maps and group statistics");
    CLI::App* report = app.add_subcommand("report", "merge stage outputs");
    for (CLI::App* cmd : {synth, extract, train, explain, report})
        add_common(cmd, opts);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? scnfusion::kExitOk : scnfusion::kExitUsage;
    }

    try {
        scnfusion::RunConfig cfg = load(opts);
        if (synth->parsed()) scnfusion::run_synth(cfg);
        if (extract->parsed()) scnfusion::run_extract(cfg, opts.jobs);
        if (train->parsed()) scnfusion::run_train(cfg, opts.jobs);
        if (explain->parsed()) scnfusion::run_explain(cfg, opts.jobs);
        if (report->parsed()) scnfusion::run_report(cfg);
    } catch (const scnfusion::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return scnfusion::kExitUsage;
    } catch (const scnfusion::NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return scnfusion::kExitNumeric;
    } catch (const scnfusion::DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return scnfusion::kExitData;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return scnfusion::kExitData;
    }
    return scnfusion::kExitOk;
}
