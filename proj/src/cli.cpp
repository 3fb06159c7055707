#include "saiw/cli.hpp"

#include "saiw/errors.hpp"
#include "saiw/executor.hpp"
#include "saiw/fixtures.hpp"
#include "saiw/hash.hpp"
#include "saiw/onnx_io.hpp"
#include "saiw/partitioner.hpp"
#include "saiw/spcp.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

namespace saiw::cli {

using nlohmann::json;

namespace {

std::string error_type(const std::exception& e)
{
    // Most derived first.
    if (dynamic_cast<const CycleError*>(&e)) return "CycleError";
    if (dynamic_cast<const InvariantError*>(&e)) return "InvariantError";
    if (dynamic_cast<const ParseError*>(&e)) return "ParseError";
    if (dynamic_cast<const UnsupportedOp*>(&e)) return "UnsupportedOp";
    if (dynamic_cast<const ShapeError*>(&e)) return "ShapeError";
    if (dynamic_cast<const MissingInput*>(&e)) return "MissingInput";
    if (dynamic_cast<const AttestationError*>(&e)) return "AttestationError";
    if (dynamic_cast<const SpecError*>(&e)) return "SpecError";
    if (dynamic_cast<const SpecMismatch*>(&e)) return "SpecMismatch";
    if (dynamic_cast<const UnknownNode*>(&e)) return "UnknownNode";
    if (dynamic_cast<const NodeKindError*>(&e)) return "NodeKindError";
    if (dynamic_cast<const RangeError*>(&e)) return "RangeError";
    if (dynamic_cast<const ManifestMismatch*>(&e)) return "ManifestMismatch";
    if (dynamic_cast<const EmptyShape*>(&e)) return "EmptyShape";
    if (dynamic_cast<const DegenerateShape*>(&e)) return "DegenerateShape";
    if (dynamic_cast<const ParamError*>(&e)) return "ParamError";
    if (dynamic_cast<const Error*>(&e)) return "Error";
    if (dynamic_cast<const std::filesystem::filesystem_error*>(&e)) return "IOError";
    return "InternalError";
}

CommandResult finish(int code, json report, std::string text)
{
    report["exit_code"] = code;
    return {code, report.dump(2) + "\n", std::move(text)};
}

template <typename F>
CommandResult guarded(const std::string& command, F&& body)
{
    try
    {
        return body();
    }
    catch (const std::exception& e)
    {
        json report{{"command", command}, {"error", {{"type", error_type(e)}, {"message", e.what()}}}};
        return finish(exit_code::kError, std::move(report), "error: " + error_type(e) + ": " + e.what() + "\n");
    }
}

json differences_json(const std::vector<Difference>& diffs)
{
    json out = json::array();
    for (const auto& d : diffs)
    {
        out.push_back({{"kind", to_string(d.kind)}, {"location", d.location}, {"lhs", d.lhs}, {"rhs", d.rhs}});
    }
    return out;
}

json tensor_summary(const TensorData& t)
{
    return {{"element_type", to_string(t.type)}, {"shape", t.shape}, {"sha256", sha256_hex(save_tensor(t))}};
}

PartitionManifest load_manifest(const Path& p) { return parse_manifest(read_file(p)); }

TensorEnv load_inputs(const std::vector<NamedInput>& inputs)
{
    TensorEnv env;
    for (const auto& [name, path] : inputs)
    {
        if (!env.emplace(name, load_tensor(read_file(path))).second)
        {
            throw Error("input '" + name + "' given twice");
        }
    }
    return env;
}

json write_outputs(const TensorEnv& outputs, const std::optional<Path>& outDir, std::string& text)
{
    json out = json::object();
    if (outDir)
    {
        std::filesystem::create_directories(*outDir);
    }
    for (const auto& [name, t] : outputs)
    {
        json entry = tensor_summary(t);
        if (outDir)
        {
            const Path file = *outDir / (name + ".pb");
            write_file(file, save_tensor(t, name));
            entry["file"] = file.string();
        }
        text += "output " + name + " " + std::string(to_string(t.type)) + shape_to_string(t.shape) + " sha256 " +
                entry["sha256"].get<std::string>() + "\n";
        out[name] = std::move(entry);
    }
    return out;
}

std::vector<std::string> split_labels(const std::string& s)
{
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
    {
        out.push_back(item);
    }
    return out;
}

} // namespace

CommandResult cmd_validate_arch(const Path& a, const Path& b, const std::optional<Path>& emitC, const Clock& clock)
{
    return guarded("validate-arch", [&] {
        const ModelFile ma = load_model_file(a);
        const ModelFile mb = load_model_file(b);
        const VerdictReport report = compare(ma, mb);
        json j{{"command", "validate-arch"},
               {"verdict", to_string(report.verdict)},
               {"a", {{"path", a.string()}, {"signature", report.lhs_digest}}},
               {"b", {{"path", b.string()}, {"signature", report.rhs_digest}}},
               {"differences", differences_json(report.differences)},
               {"emitted", nullptr}};
        std::string text = report_text(report);
        if (report.verdict == Verdict::kEqual && emitC)
        {
            const ModelFile c = emit_qualified(mb, signature(ma), clock);
            save_model_file(*emitC, c);
            j["emitted"] = {{"path", emitC->string()},
                            {"attest_time", c.graph.metadata.at(std::string(meta::kAttestTime))},
                            {"attest_tool", c.graph.metadata.at(std::string(meta::kAttestTool))}};
            text += "wrote qualified model " + emitC->string() + "\n";
        }
        return finish(report.verdict == Verdict::kEqual ? exit_code::kOk : exit_code::kNegative, std::move(j),
                      std::move(text));
    });
}

CommandResult cmd_signature(const Path& model)
{
    return guarded("signature", [&] {
        const ArchSignature sig = signature(load_model_file(model));
        json j{{"command", "signature"},
               {"path", model.string()},
               {"digest", sig.digest},
               {"canonical_text", sig.canonical_text}};
        return finish(exit_code::kOk, std::move(j), sig.digest + "\n" + sig.canonical_text);
    });
}

CommandResult cmd_partition(const Path& c, const Path& spec, const Path& d, const Path& e, const Path& manifest)
{
    return guarded("partition", [&] {
        const ModelFile mc = load_model_file(c);
        const PartitionSpec ps = parse_spec(read_file(spec));
        const PartitionResult r = partition(mc, ps);
        save_model_file(d, r.d);
        save_model_file(e, r.e);
        write_file(manifest, manifest_to_json(r.manifest) + "\n");

        json boundary = json::array();
        std::string text = "partitioned " + c.string() + "\n";
        text += "D: " + std::to_string(r.d.graph.nodes.size()) + " nodes, arch " + r.manifest.d_arch + "\n";
        text += "E: " + std::to_string(r.e.graph.nodes.size()) + " nodes, arch " + r.manifest.e_arch + "\n";
        for (const auto& bt : r.manifest.boundary_tensors)
        {
            boundary.push_back({{"name", bt.name},
                                {"producer", bt.producer_partition},
                                {"element_type", to_string(bt.element_type)},
                                {"shape", bt.shape}});
            text += "boundary " + bt.name + " from " + bt.producer_partition + " " +
                    std::string(to_string(bt.element_type)) + shape_to_string(bt.shape) + "\n";
        }
        json splits = json::array();
        for (const auto& s : r.manifest.channel_splits)
        {
            splits.push_back({{"node", s.original_node},
                              {"reliable_range", s.reliable_range},
                              {"out_channels", s.out_channels}});
            text += "channel split " + s.original_node + " [" + std::to_string(s.reliable_range[0]) + "," +
                    std::to_string(s.reliable_range[1]) + ") of " + std::to_string(s.out_channels) + "\n";
        }
        json warnings = json::array();
        if (r.d.graph.nodes.empty())
        {
            warnings.push_back("reliable partition D is empty");
            text += "warning: reliable partition D is empty\n";
        }
        json j{{"command", "partition"},     {"d", d.string()},          {"e", e.string()},
               {"manifest", manifest.string()}, {"boundary_tensors", boundary}, {"channel_splits", splits},
               {"exports", r.manifest.exports}, {"warnings", warnings}};
        return finish(exit_code::kOk, std::move(j), std::move(text));
    });
}

CommandResult cmd_validate_recombination(const Path& d, const Path& e, const Path& manifest, const Path& c)
{
    return guarded("validate-recombination", [&] {
        const RecombinationReport r =
            validate_recombination(load_model_file(d), load_model_file(e), load_manifest(manifest), load_model_file(c));
        const bool ok = r.verdict.verdict == Verdict::kEqual && r.weights_identical;
        json j{{"command", "validate-recombination"},
               {"verdict", ok ? "EQUAL" : "DIFFER"},
               {"architecture", to_string(r.verdict.verdict)},
               {"weights_identical", r.weights_identical},
               {"recombined_signature", r.verdict.lhs_digest},
               {"c_signature", r.verdict.rhs_digest},
               {"differences", differences_json(r.verdict.differences)}};
        std::string text = report_text(r.verdict);
        text += std::string("weights ") + (r.weights_identical ? "identical" : "DIFFER") + "\n";
        return finish(ok ? exit_code::kOk : exit_code::kNegative, std::move(j), std::move(text));
    });
}

CommandResult cmd_run(const Path& model, const std::vector<NamedInput>& inputs, const std::optional<Path>& outDir)
{
    return guarded("run", [&] {
        const TensorEnv out = run(load_model_file(model), load_inputs(inputs));
        std::string text;
        json j{{"command", "run"}, {"model", model.string()}, {"outputs", write_outputs(out, outDir, text)}};
        return finish(exit_code::kOk, std::move(j), std::move(text));
    });
}

CommandResult cmd_run_joint(const Path& d, const Path& e, const Path& manifest, const std::vector<NamedInput>& inputs,
                            const std::optional<Path>& outDir)
{
    return guarded("run-joint", [&] {
        const TensorEnv out =
            run_joint(load_model_file(d), load_model_file(e), load_manifest(manifest), load_inputs(inputs));
        std::string text;
        json j{{"command", "run-joint"}, {"outputs", write_outputs(out, outDir, text)}};
        return finish(exit_code::kOk, std::move(j), std::move(text));
    });
}

SpcpRun spcp_pipeline(const ModelFile& d, const ModelFile& e, const PartitionManifest& manifest,
                      const TemplateSet& templates, const TensorData& image, const SpcpParams& params)
{
    verify_manifest(d, e, manifest);
    if (manifest.source_inputs.size() != 1 || manifest.source_outputs.size() != 1)
    {
        throw Error("spcp needs a model with exactly one input and one output");
    }
    if (manifest.exports.empty())
    {
        throw Error("partition D exports no edge tensor for the validator");
    }

    std::vector<std::string> boundary;
    for (const auto& bt : manifest.boundary_tensors)
    {
        boundary.push_back(bt.name);
    }
    const TensorEnv inputs{{manifest.source_inputs.front(), image}};
    const detail::JointResult jr = detail::exchange_run(d.graph, e.graph, boundary, inputs);

    const std::string& outName = manifest.source_outputs.front();
    auto scoresIt = jr.e.find(outName);
    if (scoresIt == jr.e.end())
    {
        scoresIt = jr.d.find(outName);
        if (scoresIt == jr.d.end())
        {
            throw InvariantError("classifier output '" + outName + "' was not produced");
        }
    }
    const std::vector<float>& scores = scoresIt->second.f32;
    const auto labelsIt = e.graph.metadata.find(fixtures::kLabelsKey);
    if (labelsIt == e.graph.metadata.end())
    {
        throw Error(std::string("E has no '") + fixtures::kLabelsKey + "' metadata");
    }
    const auto labels = split_labels(labelsIt->second);
    if (labels.size() != scores.size() || scores.empty())
    {
        throw Error("class label count does not match the classifier output");
    }
    const auto top = static_cast<size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());

    SpcpRun run;
    run.cnn_class = labels[top];
    run.edge_tensor = manifest.exports.front();
    run.decision = spcp_validate(jr.d.at(run.edge_tensor), run.cnn_class, scores, templates, params);
    return run;
}

CommandResult cmd_spcp(const Path& d, const Path& e, const Path& manifest, const Path& templates, const Path& image,
                       const std::optional<Path>& decisionOut)
{
    return guarded("spcp", [&] {
        const SpcpRun r = spcp_pipeline(load_model_file(d), load_model_file(e), load_manifest(manifest),
                                        parse_templates(read_file(templates)), load_tensor(read_file(image)));
        const Decision& decision = r.decision;
        const std::string record = decision_json(decision);
        if (decisionOut)
        {
            write_file(*decisionOut, record + "\n");
        }

        json j{{"command", "spcp"}, {"decision", json::parse(record)}, {"edge_tensor", r.edge_tensor}};
        std::ostringstream text;
        text << (decision.accept ? "ACCEPT" : "REJECT") << " class " << r.cnn_class << " (" << decision.reason
             << ")";
        if (std::isfinite(decision.min_distance))
        {
            text << " distance " << decision.min_distance << " threshold " << decision.threshold;
        }
        text << "\n";
        return finish(decision.accept ? exit_code::kOk : exit_code::kNegative, std::move(j), text.str());
    });
}

CommandResult cmd_make_fixtures(const Path& dir)
{
    return guarded("make-fixtures", [&] {
        std::filesystem::create_directories(dir);
        std::vector<std::string> written;
        const auto put = [&](const std::string& name, const std::string& bytes) {
            write_file(dir / name, bytes);
            written.push_back(name);
        };
        const auto spec_for = [](const ModelFile& m, const std::string& node, int64_t s, int64_t e) {
            PartitionSpec spec;
            spec.model_arch = signature(m).digest;
            spec.assignments.push_back({node, Reliability::kReliable, std::array<int64_t, 2>{s, e}});
            return spec_to_json(spec) + "\n";
        };

        const ModelFile alexA = fixtures::alexnet(1);
        put("alexnet_a.onnx", save_model(alexA));
        put("alexnet_b.onnx", save_model(fixtures::alexnet(2)));
        put("alexnet_spec.json", spec_for(alexA, "conv1", 0, 1));
        put("alexnet_input.pb", save_tensor(fixtures::random_tensor(7, {1, 3, 67, 67}), "image"));

        const ModelFile shapeA = fixtures::shape_cnn(1, 0);
        put("shape_a.onnx", save_model(shapeA));
        put("shape_b.onnx", save_model(fixtures::shape_cnn(2, 0)));
        put("shape_spec.json", spec_for(shapeA, "conv1", 0, 2));
        put("shape_templates.json", templates_to_json(fixtures::shape_templates()) + "\n");
        for (const auto& label : fixtures::shape_labels())
        {
            put(label + ".pb", save_tensor(fixtures::render_shape(label, 64, 64, 30, 34, 14), "image"));
        }
        put("blank.pb", save_tensor(TensorData::zeros({1, 1, 64, 64}), "image"));

        std::string text;
        for (const auto& w : written)
        {
            text += "wrote " + (dir / w).string() + "\n";
        }
        json j{{"command", "make-fixtures"}, {"dir", dir.string()}, {"files", written}};
        return finish(exit_code::kOk, std::move(j), std::move(text));
    });
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Architecture validation, partitioning and protected-channel checks for ONNX CNNs", "saiw"};
    app.require_subcommand(1);
    bool asJson = false;
    std::string reportPath;
    app.add_flag("--json", asJson, "Print the JSON report instead of text");
    app.add_option("--report", reportPath, "Also write the JSON report to this file");

    std::function<CommandResult()> action;
    const auto iso = CLI::Validator(
        [](const std::string& s) { return is_iso8601_utc(s) ? std::string() : "expected YYYY-MM-DDTHH:MM:SSZ"; },
        "ISO8601", "ISO8601");
    const auto named = CLI::Validator(
        [](const std::string& s) {
            const auto eq = s.find('=');
            return eq == std::string::npos || eq == 0 || eq + 1 == s.size() ? "expected NAME=FILE" : std::string();
        },
        "NAME=FILE", "NAME=FILE");
    const auto to_inputs = [](const std::vector<std::string>& raw) {
        std::vector<NamedInput> v;
        for (const auto& s : raw)
        {
            const auto eq = s.find('=');
            v.emplace_back(s.substr(0, eq), Path(s.substr(eq + 1)));
        }
        return v;
    };

    std::string a, b, c, d, e, model, spec, manifest, templates, image, emit, outDir, decision, clock, dir;
    std::vector<std::string> inputs;

    auto* va = app.add_subcommand("validate-arch", "Compare the architectures of A and B; on EQUAL optionally emit C");
    va->add_option("A", a)->required();
    va->add_option("B", b)->required();
    va->add_option("--emit", emit, "Write the qualified model C here on EQUAL");
    va->add_option("--clock", clock, "Attestation timestamp override")->check(iso);
    va->callback([&] {
        const Clock ck = clock.empty() ? system_clock() : fixed_clock(clock);
        action = [&, ck] { return cmd_validate_arch(a, b, emit.empty() ? std::nullopt : std::optional<Path>(emit), ck); };
    });

    auto* sg = app.add_subcommand("signature", "Print the architecture signature and canonical listing");
    sg->add_option("MODEL", model)->required();
    sg->callback([&] { action = [&] { return cmd_signature(model); }; });

    auto* pt = app.add_subcommand("partition", "Split the qualified model C into D and E");
    pt->add_option("C", c)->required();
    pt->add_option("--spec", spec)->required();
    pt->add_option("--out-d", d)->required();
    pt->add_option("--out-e", e)->required();
    pt->add_option("--manifest", manifest)->required();
    pt->callback([&] { action = [&] { return cmd_partition(c, spec, d, e, manifest); }; });

    auto* vr = app.add_subcommand("validate-recombination", "Check that D and E recombine into C");
    vr->add_option("D", d)->required();
    vr->add_option("E", e)->required();
    vr->add_option("C", c)->required();
    vr->add_option("--manifest", manifest)->required();
    vr->callback([&] { action = [&] { return cmd_validate_recombination(d, e, manifest, c); }; });

    auto* rn = app.add_subcommand("run", "Run a model with the reference executor");
    rn->add_option("MODEL", model)->required();
    rn->add_option("--input", inputs, "Graph input as NAME=TENSOR_FILE")->check(named);
    rn->add_option("--output-dir", outDir, "Write each output as a TensorProto file here");
    rn->callback([&] {
        action = [&] {
            return cmd_run(model, to_inputs(inputs), outDir.empty() ? std::nullopt : std::optional<Path>(outDir));
        };
    });

    auto* rj = app.add_subcommand("run-joint", "Run D and E together, exchanging boundary tensors");
    rj->add_option("D", d)->required();
    rj->add_option("E", e)->required();
    rj->add_option("--manifest", manifest)->required();
    rj->add_option("--input", inputs, "Graph input as NAME=TENSOR_FILE")->check(named);
    rj->add_option("--output-dir", outDir, "Write each output as a TensorProto file here");
    rj->callback([&] {
        action = [&] {
            return cmd_run_joint(d, e, manifest, to_inputs(inputs),
                                 outDir.empty() ? std::nullopt : std::optional<Path>(outDir));
        };
    });

    auto* sp = app.add_subcommand("spcp", "Classify an image and gate the class with the shape validator");
    sp->add_option("D", d)->required();
    sp->add_option("E", e)->required();
    sp->add_option("--manifest", manifest)->required();
    sp->add_option("--templates", templates)->required();
    sp->add_option("--image", image)->required();
    sp->add_option("--decision", decision, "Write the decision record here");
    sp->callback([&] {
        action = [&] {
            return cmd_spcp(d, e, manifest, templates, image,
                            decision.empty() ? std::nullopt : std::optional<Path>(decision));
        };
    });

    auto* mf = app.add_subcommand("make-fixtures", "Write demo models, specs, templates and inputs");
    mf->add_option("DIR", dir)->required();
    mf->callback([&] { action = [&] { return cmd_make_fixtures(dir); }; });

    try
    {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    }
    catch (const CLI::ParseError& ex)
    {
        const int code = app.exit(ex, out, err);
        return code == 0 ? exit_code::kOk : exit_code::kUsage;
    }

    const CommandResult r = action();
    out << (asJson ? r.json : r.text);
    if (!reportPath.empty())
    {
        std::ofstream f(reportPath, std::ios::binary);
        f << r.json;
        if (!f)
        {
            err << "error: cannot write report " << reportPath << "\n";
            return exit_code::kError;
        }
    }
    return r.exit_code;
}

} // namespace saiw::cli
