// typoprobe: synth, run and validate subcommands over the C API.

#include <CLI11.hpp>

#include <cstdio>
#include <optional>
#include <string>

#include "typoprobe/typoprobe.h"

namespace {

enum Exit { kExitOk = 0, kExitValidation = 1, kExitBadInput = 2, kExitMissing = 3, kExitNumerical = 4 };

int exit_code(tp_status s) {
    switch (s) {
        case TP_OK: return kExitOk;
        case TP_ERR_BAD_INPUT:
        case TP_ERR_PARSE:
        case TP_ERR_INVALID_ARGUMENT: return kExitBadInput;
        case TP_ERR_MISSING_DATA:
        case TP_ERR_IO: return kExitMissing;
        case TP_ERR_NUMERICAL: return kExitNumerical;
        default: return kExitValidation;
    }
}

int report_failure(tp_status s) {
    std::fprintf(stderr, "{\"level\":\"error\",\"event\":\"failed\",\"status\":\"%s\",\"message\":", tp_status_name(s));
    // Minimal JSON string escaping for the message.
    std::string msg = "\"";
    for (const char* c = tp_last_error(); *c; ++c) {
        const unsigned char ch = static_cast<unsigned char>(*c);
        if (ch == '"' || ch == '\\') {
            msg += '\\';
            msg += *c;
        } else if (ch < 0x20) {
            char buf[8];
            std::snprintf(buf, sizeof buf, "\\u%04x", ch);
            msg += buf;
        } else {
            msg += *c;
        }
    }
    msg += "\"}\n";
    std::fputs(msg.c_str(), stderr);
    return exit_code(s);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cross-neutralising probes for multilingual sentence encoders"};
    app.require_subcommand(1);
    app.set_version_flag("--version", tp_version());

    bool quiet = false;
    std::optional<std::uint64_t> seed;
    app.add_flag("--quiet,-q", quiet, "Only log errors")->configurable(false);
    app.add_option("--seed", seed, "Override the seed");

    auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus from a spec");
    std::string spec_path;
    std::string synth_out;
    synth->add_option("spec", spec_path, "Synthetic spec (JSON)")->required();
    synth->add_option("--out,-o", synth_out, "Output directory")->required();

    auto* run = app.add_subcommand("run", "Train probes and run the neutralisation experiments of a plan");
    std::string plan_path;
    std::optional<int> layer;
    std::optional<std::string> modes;
    std::optional<double> threshold;
    std::string format = "all";
    std::string run_out;
    run->add_option("plan", plan_path, "Experiment plan (JSON)")->required();
    run->add_option("--layer", layer, "Override the layer index");
    run->add_option("--modes", modes, "Comma-separated subset of baseline,self,cross");
    run->add_option("--threshold", threshold, "Baseline accuracy below which x is marked insufficient");
    run->add_option("--format", format, "csv, json, md or all (comma-separated)");
    run->add_option("--out,-o", run_out, "Root directory for run directories");

    auto* validate = app.add_subcommand("validate", "Check a manifest against its embedding files");
    std::string manifest_path;
    validate->add_option("manifest", manifest_path, "manifest.json")->required();

    for (auto* sub : {synth, run, validate}) {
        sub->add_flag("--quiet,-q", quiet, "Only log errors");
        sub->add_option("--seed", seed, "Override the seed");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitBadInput;
    }
    tp_set_quiet(quiet ? 1 : 0);

    if (*synth) {
        const tp_status s = tp_synth(spec_path.c_str(), synth_out.c_str(), seed ? &*seed : nullptr);
        if (s != TP_OK) return report_failure(s);
        std::printf("%s\n", synth_out.c_str());
        return kExitOk;
    }

    if (*run) {
        tp_run_options opts;
        tp_run_options_init(&opts);
        if (seed) {
            opts.has_seed = 1;
            opts.seed = *seed;
        }
        if (layer) {
            opts.has_layer = 1;
            opts.layer = *layer;
        }
        if (threshold) {
            opts.has_threshold = 1;
            opts.threshold = *threshold;
        }
        if (modes) opts.modes = modes->c_str();
        opts.formats = format.c_str();
        if (!run_out.empty()) opts.out_root = run_out.c_str();
        char* dir = nullptr;
        const tp_status s = tp_run(plan_path.c_str(), &opts, &dir);
        if (s != TP_OK) return report_failure(s);
        std::printf("%s\n", dir);
        tp_string_free(dir);
        return kExitOk;
    }

    int consistent = 0;
    char* report = nullptr;
    const tp_status s = tp_validate_manifest(manifest_path.c_str(), &consistent, &report);
    if (s != TP_OK) return report_failure(s);
    std::printf("%s\n", report);
    tp_string_free(report);
    return consistent ? kExitOk : kExitValidation;
}
