#include "optflow/cli/commands.hpp"

#include "optflow/cli/config.hpp"
#include "optflow/cli/io.hpp"
#include "optflow/cli/json_out.hpp"
#include "optflow/eval.hpp"
#include "optflow/optimizer.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace optflow::cli {

namespace fs = std::filesystem;

int exit_code_for(ErrorCode code) { return code == ErrorCode::Io ? kExitIo : kExitInvalid; }

namespace {

constexpr std::size_t kSequenceFrames = 5;

// Options shared by every command that runs the optimizer.
struct RunOptions {
    std::optional<std::string> config;
    std::optional<std::string> profile;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;

    void attach(CLI::App& cmd) {
        cmd.add_option("--config", config, "JSON file of hyperparameter overrides");
        cmd.add_option("--profile", profile, "flyingthings3d | kitti | nuscenes | argoverse");
        cmd.add_option("--seed", seed, "Seed for the run");
        cmd.add_option("--threads", threads, "Worker threads (default: OPTFLOW_THREADS or 1)")
            ->check(CLI::PositiveNumber);
    }

    Hyperparams hyperparams() const {
        std::optional<std::string> text;
        if (config) text = read_text_file(*config);
        return resolve_hyperparams(text, profile, seed);
    }

    ExecOptions exec() const {
        ExecOptions e;
        if (threads) {
            e.threads = *threads;
            return e;
        }
        if (const char* env = std::getenv("OPTFLOW_THREADS"); env && *env) {
            const std::string_view text(env);
            int n = 0;
            const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), n);
            if (ec != std::errc() || end != text.data() + text.size() || n < 1) {
                throw Error(ErrorCode::InvalidConfig, "OPTFLOW_THREADS must be a positive integer, got '" +
                                                          std::string(text) + "'");
            }
            e.threads = n;
        }
        return e;
    }
};

std::string numbered(std::string_view stem, std::size_t index, std::string_view ext) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%03zu", index);
    return std::string(stem) + "_" + buf + std::string(ext);
}

void make_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw Error(ErrorCode::Io, dir.string() + ": cannot create directory");
}

Json scene_config_json(const SceneConfig& c) {
    Json j;
    j["source_points"] = c.source_points;
    j["object_count"] = c.object_count;
    j["ego_yaw_deg"] = round6(c.ego_yaw_deg);
    j["ego_translation"] = Json::array({round6(c.ego_translation.x()), round6(c.ego_translation.y()),
                                        round6(c.ego_translation.z())});
    j["object_displacement"] = round6(c.object_displacement);
    j["object_yaw_deg"] = round6(c.object_yaw_deg);
    j["noise_sigma"] = round6(c.noise_sigma);
    j["drop_fraction"] = round6(c.drop_fraction);
    return j;
}

std::size_t count_set(const std::vector<std::uint8_t>& mask) {
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

// ---- estimate --------------------------------------------------------------

struct EstimateArgs {
    std::string source, target, out;
    bool batched = false;
    std::size_t chunk = 8192;
    RunOptions run;
};

int cmd_estimate(const EstimateArgs& a, std::ostream&) {
    const PointCloud source = read_cloud(a.source);
    const PointCloud target = read_cloud(a.target);
    const Hyperparams hp = a.run.hyperparams();
    const ExecOptions exec = a.run.exec();

    const FlowEstimate est = a.batched ? optimize_batched(source, target, hp, a.chunk, exec)
                                       : optimize_pair(source, target, hp, exec);
    write_flow(a.out, scene_flow(source, est), est.motion);

    Json diag;
    diag["source_points"] = source.size();
    diag["target_points"] = target.size();
    diag["batched"] = a.batched;
    diag["threads"] = exec.threads;
    diag["motion"] = to_json(est.motion);
    diag["hyperparams"] = to_json(hp);
    const Json details = to_json(est.diagnostics);
    for (const auto& [key, value] : details.items()) diag[key] = value;
    write_json(a.out + ".diagnostics.json", diag);
    return kExitOk;
}

// ---- evaluate --------------------------------------------------------------

struct EvaluateArgs {
    std::string est, gt;
    std::optional<std::string> out;
};

int cmd_evaluate(const EvaluateArgs& a, std::ostream& out) {
    const FlowField est = read_flow(a.est).flow;
    const FlowField gt = read_flow(a.gt).flow;
    const Json report = to_json(compute_metrics(est, gt));
    if (a.out) {
        write_json(*a.out, report);
    } else {
        out << dump(report);
    }
    return kExitOk;
}

// ---- synth -----------------------------------------------------------------

struct SynthArgs {
    std::string preset, out_dir;
    std::uint64_t seed = 0;
};

int cmd_synth(const SynthArgs& a, std::ostream&) {
    const SceneConfig config = scene_preset(a.preset);
    const fs::path dir(a.out_dir);
    make_dir(dir);

    Json manifest;
    manifest["preset"] = a.preset;
    manifest["seed"] = a.seed;
    manifest["config"] = scene_config_json(config);

    if (a.preset == "sequence5") {
        const SyntheticSequence seq = gen_sequence(config, kSequenceFrames, a.seed);
        write_cloud(dir / "source.ofpc", seq.clouds[0]);
        write_cloud(dir / "target.ofpc", seq.clouds[1]);
        write_flow(dir / "gt.offl", seq.gt_flows[0], seq.gt_motion);
        Json frames = Json::array();
        Json flows = Json::array();
        for (std::size_t f = 0; f < seq.clouds.size(); ++f) {
            const std::string name = numbered("frame", f, ".ofpc");
            write_cloud(dir / name, seq.clouds[f]);
            frames.push_back(name);
        }
        for (std::size_t f = 0; f < seq.gt_flows.size(); ++f) {
            const std::string name = numbered("gt", f, ".offl");
            write_flow(dir / name, seq.gt_flows[f], seq.gt_motion);
            flows.push_back(name);
        }
        manifest["source_points"] = seq.clouds[0].size();
        manifest["target_points"] = seq.clouds[1].size();
        manifest["dynamic_points"] = count_set(seq.dynamic_mask);
        manifest["gt_motion"] = to_json(seq.gt_motion);
        manifest["frames"] = std::move(frames);
        manifest["gt_flows"] = std::move(flows);
    } else {
        const SyntheticScene scene = gen_scene(config, a.seed);
        write_cloud(dir / "source.ofpc", scene.source);
        write_cloud(dir / "target.ofpc", scene.target);
        write_flow(dir / "gt.offl", scene.gt_flow, scene.gt_motion);
        manifest["source_points"] = scene.source.size();
        manifest["target_points"] = scene.target.size();
        manifest["dynamic_points"] = count_set(scene.dynamic_mask);
        manifest["gt_motion"] = to_json(scene.gt_motion);
    }
    manifest["files"] = Json::array({"source.ofpc", "target.ofpc", "gt.offl"});
    write_json(dir / "manifest.json", manifest);
    return kExitOk;
}

// ---- ablate ----------------------------------------------------------------

struct AblateArgs {
    std::string source, target, gt, out;
    RunOptions run;
};

int cmd_ablate(const AblateArgs& a, std::ostream&) {
    const PointCloud source = read_cloud(a.source);
    const PointCloud target = read_cloud(a.target);
    const FlowField gt = read_flow(a.gt).flow;
    if (gt.size() != source.size()) {
        throw Error(ErrorCode::LengthMismatch, "ground truth has " + std::to_string(gt.size()) +
                                                   " vectors but the source has " + std::to_string(source.size()) +
                                                   " points");
    }
    const Hyperparams full = a.run.hyperparams();
    const ExecOptions exec = a.run.exec();

    Hyperparams no_ego = full;
    no_ego.ego_motion = false;
    Hyperparams fixed = full;
    fixed.d_floor = fixed.d_init;
    Hyperparams no_corr = full;
    no_corr.k_local = 1;

    const std::pair<const char*, const Hyperparams*> variants[] = {
        {"full", &full},
        {"no_ego_motion", &no_ego},
        {"fixed_threshold", &fixed},
        {"no_correlation", &no_corr},
    };
    Json entries = Json::array();
    for (const auto& [name, hp] : variants) {
        const FlowEstimate est = optimize_pair(source, target, *hp, exec);
        Json entry;
        entry["name"] = name;
        entry["metrics"] = to_json(compute_metrics(scene_flow(source, est), gt));
        entry["iterations"] = est.diagnostics.trace.size();
        entry["stop_reason"] = std::string(to_string(est.diagnostics.stop_reason));
        entries.push_back(std::move(entry));
    }
    Json doc;
    doc["seed"] = full.seed;
    doc["configurations"] = std::move(entries);
    write_json(a.out, doc);
    return kExitOk;
}

// ---- sequence --------------------------------------------------------------

struct SequenceArgs {
    std::vector<std::string> clouds;
    int warm_iters = 30;
    std::string out_dir;
    bool eped = false;
    RunOptions run;
};

int cmd_sequence(const SequenceArgs& a, std::ostream&) {
    if (a.clouds.size() < 2) throw Error(ErrorCode::InvalidConfig, "--clouds needs at least two paths");
    std::vector<PointCloud> clouds;
    clouds.reserve(a.clouds.size());
    for (const auto& path : a.clouds) clouds.push_back(read_cloud(path));
    const Hyperparams hp = a.run.hyperparams();
    const ExecOptions exec = a.run.exec();
    const fs::path dir(a.out_dir);
    make_dir(dir);

    const auto estimates = optimize_sequence(clouds, hp, a.warm_iters, exec);
    Json pairs = Json::array();
    for (std::size_t k = 0; k < estimates.size(); ++k) {
        const FlowEstimate& est = estimates[k];
        const std::string name = numbered("flow", k, ".offl");
        const FlowField flow = scene_flow(clouds[k], est);
        write_flow(dir / name, flow, est.motion);

        Json pair;
        pair["index"] = k;
        pair["source"] = a.clouds[k];
        pair["target"] = a.clouds[k + 1];
        pair["flow"] = name;
        pair["warm"] = k > 0;
        pair["iterations"] = est.diagnostics.trace.size();
        pair["stop_reason"] = std::string(to_string(est.diagnostics.stop_reason));
        pair["wall_seconds"] = round6(est.diagnostics.wall_seconds);
        pair["motion"] = to_json(est.motion);
        if (a.eped && k > 0) {
            const FlowEstimate rerun = optimize_pair(clouds[k], clouds[k + 1], hp, exec);
            pair["eped"] = round6(eped(scene_flow(clouds[k], rerun), flow));
            pair["full_wall_seconds"] = round6(rerun.diagnostics.wall_seconds);
        } else {
            pair["eped"] = nullptr;
        }
        pairs.push_back(std::move(pair));
    }
    Json summary;
    summary["warm_iters"] = a.warm_iters;
    summary["hyperparams"] = to_json(hp);
    summary["pairs"] = std::move(pairs);
    write_json(dir / "summary.json", summary);
    return kExitOk;
}

std::string one_line(std::string text) {
    std::replace(text.begin(), text.end(), '\n', ' ');
    while (!text.empty() && text.back() == ' ') text.pop_back();
    return text;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Scene flow estimation between two point clouds by runtime optimization", "optflow"};
    app.require_subcommand(1);

    EstimateArgs est;
    auto* estimate = app.add_subcommand("estimate", "Estimate scene flow for one pair of clouds");
    estimate->add_option("--source", est.source, "Source cloud (.ofpc or .xyz)")->required();
    estimate->add_option("--target", est.target, "Target cloud (.ofpc or .xyz)")->required();
    estimate->add_option("--out", est.out, "Output flow file (.offl)")->required();
    estimate->add_flag("--batched", est.batched, "Optimize random source chunks independently");
    estimate->add_option("--chunk-size", est.chunk, "Points per chunk in batched mode")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    est.run.attach(*estimate);

    EvaluateArgs ev;
    auto* evaluate = app.add_subcommand("evaluate", "Compare an estimated flow with ground truth");
    evaluate->add_option("--est", ev.est, "Estimated flow file")->required();
    evaluate->add_option("--gt", ev.gt, "Ground-truth flow file")->required();
    evaluate->add_option("--out", ev.out, "Metrics JSON (default: stdout)");

    SynthArgs sy;
    auto* synth = app.add_subcommand("synth", "Write a synthetic scene with ground truth");
    synth->add_option("--preset", sy.preset, "static_world | ego_only | ego_plus_objects | occluded | sequence5")
        ->required();
    synth->add_option("--seed", sy.seed, "Generator seed")->capture_default_str();
    synth->add_option("--out-dir", sy.out_dir, "Output directory")->required();

    AblateArgs ab;
    auto* ablate = app.add_subcommand("ablate", "Run the four ablation configurations");
    ablate->add_option("--source", ab.source, "Source cloud")->required();
    ablate->add_option("--target", ab.target, "Target cloud")->required();
    ablate->add_option("--gt", ab.gt, "Ground-truth flow file")->required();
    ablate->add_option("--out", ab.out, "Comparison JSON")->required();
    ab.run.attach(*ablate);

    SequenceArgs sq;
    auto* sequence = app.add_subcommand("sequence", "Estimate flow along a sequence with warm starts");
    sequence->add_option("--clouds", sq.clouds, "Cloud files in temporal order")->required()->expected(2, -1);
    sequence->add_option("--warm-iters", sq.warm_iters, "Iterations for each warm-started pair")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    sequence->add_option("--out-dir", sq.out_dir, "Output directory")->required();
    sequence->add_flag("--eped", sq.eped, "Also rerun each warm pair in full and report EPED");
    sq.run.attach(*sequence);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "optflow: error: " << one_line(e.what()) << "\n";
        return kExitInvalid;
    }

    try {
        if (*estimate) return cmd_estimate(est, out);
        if (*evaluate) return cmd_evaluate(ev, out);
        if (*synth) return cmd_synth(sy, out);
        if (*ablate) return cmd_ablate(ab, out);
        if (*sequence) return cmd_sequence(sq, out);
    } catch (const Error& e) {
        err << "optflow: error: " << to_string(e.code()) << ": " << one_line(e.what()) << "\n";
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        err << "optflow: error: " << one_line(e.what()) << "\n";
        return kExitInvalid;
    }
    return kExitInvalid;
}

}  // namespace optflow::cli
