#include "saiw/partitioner.hpp"

#include "saiw/errors.hpp"
#include "saiw/hash.hpp"

#include <json.hpp>

#include <algorithm>
#include <unordered_map>

namespace saiw {

using nlohmann::json;

namespace {

constexpr std::string_view kD = "D";
constexpr std::string_view kE = "E";

std::string pointer_escape(const std::string& key)
{
    std::string out;
    for (char ch : key)
    {
        if (ch == '~')
        {
            out += "~0";
        }
        else if (ch == '/')
        {
            out += "~1";
        }
        else
        {
            out += ch;
        }
    }
    return out;
}

bool is_hex_digest(const std::string& s)
{
    return s.size() == 64 &&
           std::all_of(s.begin(), s.end(), [](char ch) { return (ch >= '0' && ch <= '9') || (ch >= 'a' && ch <= 'f'); });
}

void reject_unknown(const json& obj, const std::string& at, std::initializer_list<std::string_view> allowed)
{
    for (const auto& [key, value] : obj.items())
    {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
        {
            throw SpecError(at + "/" + pointer_escape(key), "unknown field");
        }
    }
}

Reliability parse_reliability(const json& j, const std::string& at)
{
    if (j.is_string())
    {
        if (j == "reliable")
        {
            return Reliability::kReliable;
        }
        if (j == "nonreliable")
        {
            return Reliability::kNonReliable;
        }
    }
    throw SpecError(at, "expected \"reliable\" or \"nonreliable\"");
}

const json& require(const json& obj, const std::string& at, const char* key)
{
    auto it = obj.find(key);
    if (it == obj.end())
    {
        throw SpecError(at + "/" + key, "required field is missing");
    }
    return *it;
}

} // namespace

std::string_view to_string(Reliability r)
{
    return r == Reliability::kReliable ? "reliable" : "nonreliable";
}

PartitionSpec parse_spec(std::string_view text)
{
    json doc;
    try
    {
        doc = json::parse(text);
    }
    catch (const json::parse_error& e)
    {
        throw SpecError("", std::string("malformed JSON: ") + e.what());
    }
    if (!doc.is_object())
    {
        throw SpecError("", "spec must be a JSON object");
    }
    reject_unknown(doc, "", {"version", "model_arch", "default_partition", "assignments"});

    PartitionSpec spec;
    const json& version = require(doc, "", "version");
    if (!version.is_number_integer() || version.get<int64_t>() != 1)
    {
        throw SpecError("/version", "unsupported spec version (expected 1)");
    }
    const json& arch = require(doc, "", "model_arch");
    if (!arch.is_string() || !is_hex_digest(arch.get<std::string>()))
    {
        throw SpecError("/model_arch", "expected a lowercase hex SHA-256 digest");
    }
    spec.model_arch = arch.get<std::string>();
    spec.default_partition = parse_reliability(require(doc, "", "default_partition"), "/default_partition");

    const json& list = require(doc, "", "assignments");
    if (!list.is_array())
    {
        throw SpecError("/assignments", "expected an array");
    }
    std::set<std::string> seenNames;
    std::set<int64_t> seenIndices;
    for (size_t k = 0; k < list.size(); ++k)
    {
        const std::string at = "/assignments/" + std::to_string(k);
        const json& item = list[k];
        if (!item.is_object())
        {
            throw SpecError(at, "expected an object");
        }
        reject_unknown(item, at, {"node", "partition", "channels"});
        Assignment a;
        const json& node = require(item, at, "node");
        if (node.is_string() && !node.get<std::string>().empty())
        {
            a.node = node.get<std::string>();
            if (!seenNames.insert(node.get<std::string>()).second)
            {
                throw SpecError(at + "/node", "node '" + node.get<std::string>() + "' is assigned twice");
            }
        }
        else if (node.is_number_integer() && node.get<int64_t>() >= 0)
        {
            a.node = node.get<int64_t>();
            if (!seenIndices.insert(node.get<int64_t>()).second)
            {
                throw SpecError(at + "/node", "canonical index " + node.dump() + " is assigned twice");
            }
        }
        else
        {
            throw SpecError(at + "/node", "expected a node name or a non-negative canonical index");
        }
        a.partition = parse_reliability(require(item, at, "partition"), at + "/partition");
        if (auto ch = item.find("channels"); ch != item.end())
        {
            if (!ch->is_array() || ch->size() != 2 || !(*ch)[0].is_number_integer() ||
                !(*ch)[1].is_number_integer())
            {
                throw SpecError(at + "/channels", "expected [start, end] integers");
            }
            const auto s = (*ch)[0].get<int64_t>();
            const auto e = (*ch)[1].get<int64_t>();
            if (s < 0 || e <= s)
            {
                throw SpecError(at + "/channels", "range [" + std::to_string(s) + "," + std::to_string(e) +
                                                      ") is empty or negative");
            }
            if (a.partition != Reliability::kReliable)
            {
                throw SpecError(at + "/partition", "a channel range names the reliable slice; use \"reliable\"");
            }
            a.channels = std::array<int64_t, 2>{s, e};
        }
        spec.assignments.push_back(std::move(a));
    }
    return spec;
}

std::string spec_to_json(const PartitionSpec& spec)
{
    json doc;
    doc["version"] = spec.version;
    doc["model_arch"] = spec.model_arch;
    doc["default_partition"] = to_string(spec.default_partition);
    doc["assignments"] = json::array();
    for (const auto& a : spec.assignments)
    {
        json item;
        if (const auto* name = std::get_if<std::string>(&a.node))
        {
            item["node"] = *name;
        }
        else
        {
            item["node"] = std::get<int64_t>(a.node);
        }
        item["partition"] = to_string(a.partition);
        if (a.channels)
        {
            item["channels"] = {(*a.channels)[0], (*a.channels)[1]};
        }
        doc["assignments"].push_back(std::move(item));
    }
    return doc.dump(2) + "\n";
}

// ---------------------------------------------------------------------------------------------
// Manifest serialization

namespace {

json to_json(const PartitionManifest& m)
{
    json doc;
    doc["version"] = m.version;
    doc["source_arch"] = m.source_arch;
    doc["d_arch"] = m.d_arch;
    doc["e_arch"] = m.e_arch;
    doc["d_content_sha256"] = m.d_content_sha256;
    doc["e_content_sha256"] = m.e_content_sha256;
    doc["source_inputs"] = m.source_inputs;
    doc["source_outputs"] = m.source_outputs;
    doc["exports"] = m.exports;
    doc["boundary_tensors"] = json::array();
    for (const auto& b : m.boundary_tensors)
    {
        doc["boundary_tensors"].push_back({{"name", b.name},
                                           {"producer_partition", b.producer_partition},
                                           {"element_type", to_string(b.element_type)},
                                           {"shape", b.shape}});
    }
    doc["channel_splits"] = json::array();
    for (const auto& s : m.channel_splits)
    {
        json order = json::array();
        for (const auto& seg : s.channel_order)
        {
            order.push_back({{"node", seg.node}, {"partition", seg.partition}, {"range", {seg.start, seg.end}}});
        }
        doc["channel_splits"].push_back({{"original_node", s.original_node},
                                         {"source_index", s.source_index},
                                         {"original_output", s.original_output},
                                         {"original_weight", s.original_weight},
                                         {"original_bias", s.original_bias},
                                         {"out_channels", s.out_channels},
                                         {"reliable_range", s.reliable_range},
                                         {"reliable_node_in_D", s.reliable_node_in_D},
                                         {"remainder_nodes_in_E", s.remainder_nodes_in_E},
                                         {"merge_node", s.merge_node},
                                         {"merge_partition", s.merge_partition},
                                         {"channel_order", std::move(order)}});
    }
    doc["reassembly"] = json::array();
    for (const auto& r : m.reassembly)
    {
        doc["reassembly"].push_back({{"partition", r.partition},
                                     {"node", r.node},
                                     {"source_index", r.source_index},
                                     {"source_name", r.source_name},
                                     {"role", r.role}});
    }
    doc["validator_ref"] = m.validator_ref ? json(*m.validator_ref) : json(nullptr);
    return doc;
}

/// Strict reader: every key must be known and typed as written by to_json.
class ManifestReader
{
public:
    template <typename T>
    static T get(const json& obj, const char* key)
    {
        auto it = obj.find(key);
        if (it == obj.end())
        {
            throw ManifestMismatch(std::string("manifest field '") + key + "' is missing");
        }
        return it->get<T>();
    }

    static void keys(const json& obj, std::initializer_list<std::string_view> allowed, const char* what)
    {
        if (!obj.is_object())
        {
            throw ManifestMismatch(std::string("manifest ") + what + " is not an object");
        }
        for (const auto& [key, value] : obj.items())
        {
            if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            {
                throw ManifestMismatch(std::string("unexpected manifest field '") + key + "' in " + what);
            }
        }
    }
};

} // namespace

std::string manifest_to_json(const PartitionManifest& m, int indent)
{
    return to_json(m).dump(indent);
}

PartitionManifest parse_manifest(std::string_view text)
{
    using R = ManifestReader;
    try
    {
        const json doc = json::parse(text);
        R::keys(doc,
                {"version", "source_arch", "d_arch", "e_arch", "d_content_sha256", "e_content_sha256",
                 "source_inputs", "source_outputs", "exports", "boundary_tensors", "channel_splits", "reassembly",
                 "validator_ref"},
                "document");
        PartitionManifest m;
        m.version = R::get<int64_t>(doc, "version");
        if (m.version != 1)
        {
            throw ManifestMismatch("unsupported manifest version " + std::to_string(m.version));
        }
        m.source_arch = R::get<std::string>(doc, "source_arch");
        m.d_arch = R::get<std::string>(doc, "d_arch");
        m.e_arch = R::get<std::string>(doc, "e_arch");
        m.d_content_sha256 = R::get<std::string>(doc, "d_content_sha256");
        m.e_content_sha256 = R::get<std::string>(doc, "e_content_sha256");
        m.source_inputs = R::get<std::vector<std::string>>(doc, "source_inputs");
        m.source_outputs = R::get<std::vector<std::string>>(doc, "source_outputs");
        m.exports = R::get<std::vector<std::string>>(doc, "exports");
        for (const auto& b : doc.at("boundary_tensors"))
        {
            R::keys(b, {"name", "producer_partition", "element_type", "shape"}, "boundary tensor");
            BoundaryTensor t;
            t.name = R::get<std::string>(b, "name");
            t.producer_partition = R::get<std::string>(b, "producer_partition");
            const auto type = element_type_from_string(R::get<std::string>(b, "element_type"));
            if (!type)
            {
                throw ManifestMismatch("boundary tensor '" + t.name + "' has an unknown element type");
            }
            t.element_type = *type;
            t.shape = R::get<Shape>(b, "shape");
            m.boundary_tensors.push_back(std::move(t));
        }
        for (const auto& s : doc.at("channel_splits"))
        {
            R::keys(s,
                    {"original_node", "source_index", "original_output", "original_weight", "original_bias",
                     "out_channels", "reliable_range", "reliable_node_in_D", "remainder_nodes_in_E", "merge_node",
                     "merge_partition", "channel_order"},
                    "channel split");
            ChannelSplit c;
            c.original_node = R::get<std::string>(s, "original_node");
            c.source_index = R::get<int64_t>(s, "source_index");
            c.original_output = R::get<std::string>(s, "original_output");
            c.original_weight = R::get<std::string>(s, "original_weight");
            c.original_bias = R::get<std::string>(s, "original_bias");
            c.out_channels = R::get<int64_t>(s, "out_channels");
            c.reliable_range = R::get<std::array<int64_t, 2>>(s, "reliable_range");
            c.reliable_node_in_D = R::get<std::string>(s, "reliable_node_in_D");
            c.remainder_nodes_in_E = R::get<std::vector<std::string>>(s, "remainder_nodes_in_E");
            c.merge_node = R::get<std::string>(s, "merge_node");
            c.merge_partition = R::get<std::string>(s, "merge_partition");
            for (const auto& seg : s.at("channel_order"))
            {
                R::keys(seg, {"node", "partition", "range"}, "channel segment");
                const auto range = R::get<std::array<int64_t, 2>>(seg, "range");
                c.channel_order.push_back({R::get<std::string>(seg, "node"), R::get<std::string>(seg, "partition"),
                                           range[0], range[1]});
            }
            m.channel_splits.push_back(std::move(c));
        }
        for (const auto& r : doc.at("reassembly"))
        {
            R::keys(r, {"partition", "node", "source_index", "source_name", "role"}, "reassembly entry");
            m.reassembly.push_back({R::get<std::string>(r, "partition"), R::get<std::string>(r, "node"),
                                    R::get<int64_t>(r, "source_index"), R::get<std::string>(r, "source_name"),
                                    R::get<std::string>(r, "role")});
        }
        const json& ref = doc.at("validator_ref");
        if (!ref.is_null())
        {
            m.validator_ref = ref.get<std::string>();
        }
        return m;
    }
    catch (const json::exception& e)
    {
        throw ManifestMismatch(std::string("malformed manifest: ") + e.what());
    }
}

// ---------------------------------------------------------------------------------------------
// Channel splitting

namespace {

std::string fresh(const std::string& want, std::set<std::string>& taken)
{
    std::string name = want;
    for (int k = 1; taken.count(name); ++k)
    {
        name = want + "_" + std::to_string(k);
    }
    taken.insert(name);
    return name;
}

TensorData rows(const TensorData& t, int64_t begin, int64_t end)
{
    const int64_t stride = t.shape[0] == 0 ? 0 : t.size() / t.shape[0];
    Shape shape = t.shape;
    shape[0] = end - begin;
    std::vector<float> values(t.f32.begin() + begin * stride, t.f32.begin() + end * stride);
    return TensorData::make_f32(std::move(shape), std::move(values));
}

} // namespace

ConvSplit split_conv_channels(const GraphIR& graph, size_t index, int64_t s, int64_t e, const std::string& base,
                              std::set<std::string>& taken)
{
    const NodeIR& node = graph.nodes.at(index);
    const std::string who = node.name.empty() ? base : node.name;
    if (node.op_type != "Conv")
    {
        throw NodeKindError("channel ranges apply to Conv nodes only; '" + who + "' is " + node.op_type);
    }
    auto weightIt = graph.initializers.find(node.inputs.at(1));
    if (weightIt == graph.initializers.end())
    {
        throw NodeKindError("Conv '" + who + "' has no initializer weight to split");
    }
    if (auto g = node.attributes.find("group"); g != node.attributes.end() && std::get<int64_t>(g->second) != 1)
    {
        throw NodeKindError("grouped Conv '" + who + "' cannot be split by output channel");
    }
    const TensorData& weight = weightIt->second;
    const int64_t m = weight.shape.at(0);
    if (s < 0 || e > m || s >= e)
    {
        throw RangeError("channel range [" + std::to_string(s) + "," + std::to_string(e) + ") is outside [0," +
                         std::to_string(m) + ") of Conv '" + who + "'");
    }
    const TensorData* bias = nullptr;
    std::string biasName;
    if (node.inputs.size() > 2 && !node.inputs[2].empty())
    {
        auto b = graph.initializers.find(node.inputs[2]);
        if (b == graph.initializers.end())
        {
            throw NodeKindError("Conv '" + who + "' has a computed bias, which cannot be split");
        }
        bias = &b->second;
        biasName = b->first;
    }

    ConvSplit out;
    auto piece = [&](int64_t from, int64_t to, const std::string& suffix) {
        NodeIR p = node;
        p.name = fresh(base + suffix, taken);
        p.outputs = {fresh(node.outputs[0] + suffix, taken)};
        p.inputs[1] = fresh(weightIt->first + suffix, taken);
        out.initializers.emplace(p.inputs[1], rows(weight, from, to));
        if (bias)
        {
            p.inputs[2] = fresh(biasName + suffix, taken);
            out.initializers.emplace(p.inputs[2], rows(*bias, from, to));
        }
        out.order.push_back({p.name, "", from, to});
        return p;
    };
    if (s > 0)
    {
        out.remainders.push_back(piece(0, s, "__saiw_n0"));
    }
    out.reliable = piece(s, e, "__saiw_r");
    if (e < m)
    {
        out.remainders.push_back(piece(e, m, out.remainders.empty() ? "__saiw_n0" : "__saiw_n1"));
    }
    // Segments were created in channel order already.
    out.merge.name = fresh(base + "__saiw_merge", taken);
    out.merge.op_type = "Concat";
    out.merge.attributes["axis"] = int64_t{1};
    out.merge.outputs = {node.outputs[0]};
    if (s > 0)
    {
        out.merge.inputs.push_back(out.remainders[0].outputs[0]);
    }
    out.merge.inputs.push_back(out.reliable.outputs[0]);
    if (e < m)
    {
        out.merge.inputs.push_back(out.remainders.back().outputs[0]);
    }
    return out;
}

// ---------------------------------------------------------------------------------------------
// Partitioning

namespace {

struct Piece
{
    NodeIR node;
    std::string part; // "D" / "E"
    size_t source = 0;
    std::string role;
};

std::map<std::string, std::string> public_metadata(const GraphIR& g)
{
    std::map<std::string, std::string> out;
    for (const auto& [k, v] : g.metadata)
    {
        if (k.rfind(meta::kPrefix, 0) != 0)
        {
            out.emplace(k, v);
        }
    }
    return out;
}

std::string content_digest(const ModelFile& m)
{
    ModelFile copy = m;
    copy.graph.metadata.erase(std::string(meta::kManifest));
    return sha256_hex(save_model(copy));
}

std::string describe(const std::variant<std::string, int64_t>& ref)
{
    if (const auto* s = std::get_if<std::string>(&ref))
    {
        return *s;
    }
    return "#" + std::to_string(std::get<int64_t>(ref));
}

} // namespace

PartitionResult partition(const ModelFile& c, const PartitionSpec& spec)
{
    const GraphIR& g = c.graph;
    auto attested = g.metadata.find(std::string(meta::kAttestArch));
    if (attested == g.metadata.end())
    {
        throw SpecMismatch("model carries no architecture attestation; validate it first");
    }
    if (attested->second != spec.model_arch)
    {
        throw SpecMismatch("spec is bound to architecture " + spec.model_arch + " but the model is attested as " +
                           attested->second);
    }
    const ArchSignature sig = signature(g);
    if (sig.digest != attested->second)
    {
        throw SpecMismatch("model attestation " + attested->second + " does not match its structure " + sig.digest);
    }

    const CanonicalForm form = canonicalize(g);
    const size_t n = g.nodes.size();
    std::vector<size_t> canonPos(n);
    for (size_t k = 0; k < n; ++k)
    {
        canonPos[form.order[k]] = k;
    }

    // Resolve assignments.
    std::vector<Reliability> rel(n, spec.default_partition);
    std::map<size_t, std::array<int64_t, 2>> splits;
    std::set<size_t> assigned;
    for (size_t k = 0; k < spec.assignments.size(); ++k)
    {
        const Assignment& a = spec.assignments[k];
        const std::string at = "/assignments/" + std::to_string(k) + "/node";
        size_t v = 0;
        if (const auto* name = std::get_if<std::string>(&a.node))
        {
            std::vector<size_t> hits;
            for (size_t i = 0; i < n; ++i)
            {
                if (g.nodes[i].name == *name)
                {
                    hits.push_back(i);
                }
            }
            if (hits.empty())
            {
                throw UnknownNode(*name);
            }
            if (hits.size() > 1)
            {
                throw SpecError(at, "node name '" + *name + "' is ambiguous; use a canonical index");
            }
            v = hits[0];
        }
        else
        {
            const int64_t idx = std::get<int64_t>(a.node);
            if (idx < 0 || static_cast<size_t>(idx) >= n)
            {
                throw UnknownNode(describe(a.node));
            }
            v = form.order[idx];
        }
        if (!assigned.insert(v).second)
        {
            throw SpecError(at, "node " + describe(a.node) + " is already assigned");
        }
        rel[v] = a.partition;
        if (!a.channels)
        {
            continue;
        }
        const NodeIR& node = g.nodes[v];
        if (node.op_type != "Conv")
        {
            throw NodeKindError("channel ranges apply to Conv nodes only; '" + describe(a.node) + "' is " +
                                node.op_type);
        }
        auto w = g.initializers.find(node.inputs.at(1));
        if (w == g.initializers.end())
        {
            throw NodeKindError("Conv '" + describe(a.node) + "' has no initializer weight to split");
        }
        const auto [s, e] = *a.channels;
        const int64_t m = w->second.shape.at(0);
        if (e > m)
        {
            throw RangeError("channel range [" + std::to_string(s) + "," + std::to_string(e) + ") exceeds the " +
                             std::to_string(m) + " output channels of '" + describe(a.node) + "'");
        }
        if (s == 0 && e == m)
        {
            continue; // the whole Conv is reliable
        }
        for (size_t i = 0; i < n; ++i)
        {
            for (size_t slot = 0; slot < g.nodes[i].inputs.size(); ++slot)
            {
                const auto& t = g.nodes[i].inputs[slot];
                const bool ownParam = i == v && slot >= 1;
                if (!ownParam && !t.empty() &&
                    (t == node.inputs[1] || (node.inputs.size() > 2 && t == node.inputs[2])))
                {
                    throw NodeKindError("Conv '" + describe(a.node) + "' shares its parameters with other nodes");
                }
            }
        }
        splits[v] = *a.channels;
        rel[v] = Reliability::kNonReliable; // only the slice is reliable
    }

    // Names in use anywhere in C.
    std::set<std::string> taken;
    std::map<std::string, int> nameCount;
    for (const auto& in : g.inputs)
    {
        taken.insert(in.name);
    }
    for (const auto& [name, t] : g.initializers)
    {
        taken.insert(name);
    }
    for (const auto& node : g.nodes)
    {
        taken.insert(node.outputs.begin(), node.outputs.end());
        ++nameCount[node.name];
    }
    for (const auto& node : g.nodes)
    {
        if (!node.name.empty())
        {
            taken.insert(node.name);
        }
    }
    auto base_name = [&](size_t v) {
        const std::string& name = g.nodes[v].name;
        return !name.empty() && nameCount[name] == 1 ? name : "n" + std::to_string(canonPos[v]);
    };

    // Consumers of every tensor, in canonical order.
    std::unordered_map<std::string, std::vector<size_t>> consumers;
    for (size_t k = 0; k < n; ++k)
    {
        const size_t v = form.order[k];
        for (const auto& t : g.nodes[v].inputs)
        {
            if (!t.empty())
            {
                consumers[t].push_back(v);
            }
        }
    }
    auto part_of = [&](size_t v) -> std::string {
        return splits.count(v) || rel[v] == Reliability::kNonReliable ? std::string(kE) : std::string(kD);
    };

    // Pieces in canonical order of their source node.
    std::vector<Piece> pieces;
    std::map<std::string, TensorData> initializers = g.initializers;
    std::vector<ChannelSplit> splitRecords;
    std::vector<std::string> exports;
    for (size_t k = 0; k < n; ++k)
    {
        const size_t v = form.order[k];
        const NodeIR& node = g.nodes[v];
        auto sp = splits.find(v);
        if (sp == splits.end())
        {
            Piece p{node, part_of(v), v, "whole"};
            if (p.node.name.empty() || nameCount[p.node.name] != 1)
            {
                p.node.name = fresh(base_name(v), taken);
            }
            pieces.push_back(std::move(p));
            continue;
        }
        const auto [s, e] = sp->second;
        ConvSplit cs = split_conv_channels(g, v, s, e, base_name(v), taken);
        initializers.erase(node.inputs[1]);
        if (node.inputs.size() > 2 && !node.inputs[2].empty())
        {
            initializers.erase(node.inputs[2]);
        }
        initializers.merge(cs.initializers);

        std::string mergePart(kE);
        for (size_t u : consumers[node.outputs[0]])
        {
            mergePart = part_of(u);
            break;
        }
        ChannelSplit rec;
        rec.original_node = node.name;
        rec.source_index = static_cast<int64_t>(v);
        rec.original_output = node.outputs[0];
        rec.original_weight = node.inputs[1];
        rec.original_bias = node.inputs.size() > 2 ? node.inputs[2] : "";
        rec.out_channels = g.initializers.at(node.inputs[1]).shape[0];
        rec.reliable_range = {s, e};
        rec.reliable_node_in_D = cs.reliable.name;
        rec.merge_node = cs.merge.name;
        rec.merge_partition = mergePart;
        for (auto seg : cs.order)
        {
            seg.partition = seg.node == cs.reliable.name ? std::string(kD) : std::string(kE);
            rec.channel_order.push_back(std::move(seg));
        }
        for (const auto& r : cs.remainders)
        {
            rec.remainder_nodes_in_E.push_back(r.name);
        }
        exports.push_back(cs.reliable.outputs[0]);
        pieces.push_back({cs.reliable, std::string(kD), v, "reliable-slice"});
        for (auto& r : cs.remainders)
        {
            pieces.push_back({std::move(r), std::string(kE), v, "remainder"});
        }
        pieces.push_back({std::move(cs.merge), mergePart, v, "merge"});
        splitRecords.push_back(std::move(rec));
    }

    GraphIR whole;
    whole.name = g.name;
    whole.inputs = g.inputs;
    whole.outputs = g.outputs;
    whole.opset_version = g.opset_version;
    whole.initializers = initializers;
    for (const auto& p : pieces)
    {
        whole.nodes.push_back(p.node);
    }
    const auto types = infer_types(whole);

    std::unordered_map<std::string, std::string> producerPart;
    for (const auto& p : pieces)
    {
        producerPart[p.node.outputs[0]] = p.part;
    }
    std::set<std::string> sourceInputs;
    for (const auto& in : g.inputs)
    {
        sourceInputs.insert(in.name);
    }

    struct Side
    {
        GraphIR graph;
        std::set<std::string> consumedInputs;
        std::vector<std::string> boundaryIn;
        std::set<std::string> usedInits;
    };
    std::map<std::string, Side> sides;
    sides[std::string(kD)];
    sides[std::string(kE)];
    std::vector<BoundaryTensor> boundary;
    std::set<std::string> boundaryNames;
    std::set<std::string> anyConsumed;
    for (const auto& p : pieces)
    {
        Side& side = sides[p.part];
        side.graph.nodes.push_back(p.node);
        for (const auto& t : p.node.inputs)
        {
            if (t.empty())
            {
                continue;
            }
            if (initializers.count(t))
            {
                side.usedInits.insert(t);
            }
            else if (sourceInputs.count(t))
            {
                side.consumedInputs.insert(t);
                anyConsumed.insert(t);
            }
            else if (producerPart.at(t) != p.part)
            {
                if (boundaryNames.insert(t).second)
                {
                    const auto& info = types.at(t);
                    boundary.push_back({t, producerPart.at(t), info.type, info.shape});
                }
                if (std::find(side.boundaryIn.begin(), side.boundaryIn.end(), t) == side.boundaryIn.end())
                {
                    side.boundaryIn.push_back(t);
                }
            }
        }
    }
    // Inputs nobody consumes (unused or passed straight through) stay with E.
    for (const auto& in : g.inputs)
    {
        if (!anyConsumed.count(in.name))
        {
            sides[std::string(kE)].consumedInputs.insert(in.name);
        }
    }
    // Initializers nobody consumes also stay with E so the architecture is preserved.
    {
        std::set<std::string> used;
        for (const auto& [part, side] : sides)
        {
            used.insert(side.usedInits.begin(), side.usedInits.end());
        }
        for (const auto& [name, t] : initializers)
        {
            if (!used.count(name))
            {
                sides[std::string(kE)].usedInits.insert(name);
            }
        }
    }
    // Sort boundary tensors by production order for a deterministic manifest.
    {
        std::unordered_map<std::string, size_t> producedAt;
        for (size_t i = 0; i < pieces.size(); ++i)
        {
            producedAt[pieces[i].node.outputs[0]] = i;
        }
        std::stable_sort(boundary.begin(), boundary.end(), [&](const BoundaryTensor& a, const BoundaryTensor& b) {
            return producedAt.at(a.name) < producedAt.at(b.name);
        });
    }

    for (auto& [part, side] : sides)
    {
        GraphIR& sg = side.graph;
        sg.name = g.name;
        sg.opset_version = g.opset_version;
        for (const auto& in : g.inputs)
        {
            if (side.consumedInputs.count(in.name))
            {
                sg.inputs.push_back(in);
            }
        }
        for (const auto& t : side.boundaryIn)
        {
            const auto& info = types.at(t);
            sg.inputs.push_back({t, info.type, info.shape});
        }
        for (const auto& name : side.usedInits)
        {
            sg.initializers.emplace(name, initializers.at(name));
        }
        std::set<std::string> outNames;
        auto add_output = [&](const std::string& t) {
            if (outNames.insert(t).second)
            {
                const auto& info = types.at(t);
                sg.outputs.push_back({t, info.type, info.shape});
            }
        };
        for (const auto& out : g.outputs)
        {
            auto it = producerPart.find(out.name);
            const bool mine = it != producerPart.end() ? it->second == part : part == kE;
            if (mine)
            {
                add_output(out.name);
            }
        }
        for (const auto& b : boundary)
        {
            if (b.producer_partition == part)
            {
                add_output(b.name);
            }
        }
        if (part == kD)
        {
            for (const auto& x : exports)
            {
                add_output(x);
            }
        }
    }

    PartitionResult result;
    PartitionManifest& m = result.manifest;
    m.source_arch = sig.digest;
    for (const auto& in : g.inputs)
    {
        m.source_inputs.push_back(in.name);
    }
    for (const auto& out : g.outputs)
    {
        m.source_outputs.push_back(out.name);
    }
    m.boundary_tensors = boundary;
    m.exports = exports;
    m.channel_splits = splitRecords;
    for (const auto& p : pieces)
    {
        m.reassembly.push_back({p.part, p.node.name, static_cast<int64_t>(p.source), g.nodes[p.source].name, p.role});
    }

    auto make_file = [&](const std::string& part) {
        ModelFile f;
        f.producer_name = c.producer_name;
        f.producer_version = c.producer_version;
        f.ir_version = c.ir_version;
        f.graph = std::move(sides.at(part).graph);
        f.graph.metadata = public_metadata(g);
        f.graph.metadata[std::string(meta::kPartition)] = part;
        f.graph.metadata[std::string(meta::kManifestSource)] = sig.digest;
        return f;
    };
    result.d = make_file(std::string(kD));
    result.e = make_file(std::string(kE));
    m.d_arch = signature(result.d).digest;
    m.e_arch = signature(result.e).digest;
    m.d_content_sha256 = content_digest(result.d);
    m.e_content_sha256 = content_digest(result.e);
    const std::string embedded = manifest_to_json(m, -1);
    result.d.graph.metadata[std::string(meta::kManifest)] = embedded;
    result.e.graph.metadata[std::string(meta::kManifest)] = embedded;
    return result;
}

// ---------------------------------------------------------------------------------------------
// Verification and recombination

namespace {

const ValueInfo* find_value(const std::vector<ValueInfo>& list, const std::string& name)
{
    for (const auto& v : list)
    {
        if (v.name == name)
        {
            return &v;
        }
    }
    return nullptr;
}

const ModelFile& side_of(const std::string& part, const ModelFile& d, const ModelFile& e)
{
    if (part == kD)
    {
        return d;
    }
    if (part == kE)
    {
        return e;
    }
    throw ManifestMismatch("unknown partition label '" + part + "'");
}

std::map<std::string, const NodeIR*> nodes_by_name(const GraphIR& g, const char* which)
{
    std::map<std::string, const NodeIR*> out;
    for (const auto& node : g.nodes)
    {
        if (!out.emplace(node.name, &node).second)
        {
            throw ManifestMismatch(std::string("node name '") + node.name + "' appears twice in " + which);
        }
    }
    return out;
}

} // namespace

void verify_manifest(const ModelFile& d, const ModelFile& e, const PartitionManifest& m)
{
    if (m.version != 1)
    {
        throw ManifestMismatch("unsupported manifest version");
    }
    const std::pair<const ModelFile*, std::string_view> files[] = {{&d, kD}, {&e, kE}};
    for (const auto& [file, part] : files)
    {
        const auto& md = file->graph.metadata;
        auto label = md.find(std::string(meta::kPartition));
        if (label == md.end() || label->second != part)
        {
            throw ManifestMismatch("file passed as " + std::string(part) + " is not labelled as partition " +
                                   std::string(part));
        }
        auto source = md.find(std::string(meta::kManifestSource));
        if (source == md.end() || source->second != m.source_arch)
        {
            throw ManifestMismatch("partition " + std::string(part) + " does not derive from " + m.source_arch);
        }
        auto emb = md.find(std::string(meta::kManifest));
        if (emb == md.end())
        {
            throw ManifestMismatch("partition " + std::string(part) + " carries no embedded manifest");
        }
        if (!(parse_manifest(emb->second) == m))
        {
            throw ManifestMismatch("manifest embedded in partition " + std::string(part) +
                                   " differs from the supplied manifest");
        }
        const std::string digest = content_digest(*file);
        const std::string& expected = part == kD ? m.d_content_sha256 : m.e_content_sha256;
        if (digest != expected)
        {
            throw ManifestMismatch("content hash of partition " + std::string(part) + " is " + digest +
                                   ", manifest records " + expected);
        }
        const std::string arch = signature(*file).digest;
        const std::string& expectedArch = part == kD ? m.d_arch : m.e_arch;
        if (arch != expectedArch)
        {
            throw ManifestMismatch("signature of partition " + std::string(part) + " is " + arch +
                                   ", manifest records " + expectedArch);
        }
    }

    std::set<std::string> boundaryNames;
    for (const auto& b : m.boundary_tensors)
    {
        if (!boundaryNames.insert(b.name).second)
        {
            throw ManifestMismatch("boundary tensor '" + b.name + "' is listed twice");
        }
        const ModelFile& producer = side_of(b.producer_partition, d, e);
        const ModelFile& consumer = &producer == &d ? e : d;
        const ValueInfo* out = find_value(producer.graph.outputs, b.name);
        const ValueInfo* in = find_value(consumer.graph.inputs, b.name);
        const ValueInfo want{b.name, b.element_type, b.shape};
        if (!out || !(*out == want))
        {
            throw ManifestMismatch("boundary tensor '" + b.name + "' is not an output of partition " +
                                   b.producer_partition + " with type " + std::string(to_string(b.element_type)) +
                                   shape_to_string(b.shape));
        }
        if (!in || !(*in == want))
        {
            throw ManifestMismatch("boundary tensor '" + b.name + "' is not a matching input of the other partition");
        }
        const bool consumed = std::any_of(consumer.graph.nodes.begin(), consumer.graph.nodes.end(), [&](const NodeIR& n) {
            return std::find(n.inputs.begin(), n.inputs.end(), b.name) != n.inputs.end();
        });
        if (!consumed)
        {
            throw ManifestMismatch("boundary tensor '" + b.name + "' is never consumed");
        }
    }
    const std::set<std::string> sourceInputs(m.source_inputs.begin(), m.source_inputs.end());
    for (const auto& [file, part] : files)
    {
        for (const auto& in : file->graph.inputs)
        {
            if (!sourceInputs.count(in.name) && !boundaryNames.count(in.name))
            {
                throw ManifestMismatch("input '" + in.name + "' of partition " + std::string(part) +
                                       " is neither a source input nor a boundary tensor");
            }
        }
    }
    for (const auto& name : m.source_inputs)
    {
        if (!find_value(d.graph.inputs, name) && !find_value(e.graph.inputs, name))
        {
            throw ManifestMismatch("source input '" + name + "' is missing from both partitions");
        }
    }
    for (const auto& name : m.source_outputs)
    {
        if (!find_value(d.graph.outputs, name) && !find_value(e.graph.outputs, name))
        {
            throw ManifestMismatch("source output '" + name + "' is missing from both partitions");
        }
    }
    for (const auto& name : m.exports)
    {
        if (!find_value(d.graph.outputs, name))
        {
            throw ManifestMismatch("export '" + name + "' is not an output of D");
        }
    }

    const auto dNodes = nodes_by_name(d.graph, "D");
    const auto eNodes = nodes_by_name(e.graph, "E");
    std::set<std::pair<std::string, std::string>> covered;
    for (const auto& r : m.reassembly)
    {
        const auto& nodes = r.partition == kD ? dNodes : eNodes;
        side_of(r.partition, d, e);
        if (!nodes.count(r.node))
        {
            throw ManifestMismatch("reassembly names missing node '" + r.node + "' in " + r.partition);
        }
        if (!covered.emplace(r.partition, r.node).second)
        {
            throw ManifestMismatch("node '" + r.node + "' appears twice in the reassembly map");
        }
    }
    if (covered.size() != dNodes.size() + eNodes.size())
    {
        throw ManifestMismatch("reassembly map does not cover every node of D and E");
    }
    for (const auto& s : m.channel_splits)
    {
        int64_t next = 0;
        for (const auto& seg : s.channel_order)
        {
            if (seg.start != next || seg.end <= seg.start)
            {
                throw ManifestMismatch("channel order of '" + s.original_output + "' does not tile the channels");
            }
            next = seg.end;
            if (!covered.count({seg.partition, seg.node}))
            {
                throw ManifestMismatch("channel segment node '" + seg.node + "' is not in the reassembly map");
            }
        }
        if (next != s.out_channels)
        {
            throw ManifestMismatch("channel order of '" + s.original_output + "' does not reach " +
                                   std::to_string(s.out_channels));
        }
        if (!covered.count({s.merge_partition, s.merge_node}))
        {
            throw ManifestMismatch("merge node '" + s.merge_node + "' is not in the reassembly map");
        }
    }
}

GraphIR recombine(const ModelFile& d, const ModelFile& e, const PartitionManifest& m)
{
    verify_manifest(d, e, m);
    if (d.graph.opset_version != e.graph.opset_version)
    {
        throw ManifestMismatch("D and E declare different opsets");
    }
    auto find_node = [&](const std::string& part, const std::string& name) -> const NodeIR& {
        for (const auto& node : side_of(part, d, e).graph.nodes)
        {
            if (node.name == name)
            {
                return node;
            }
        }
        throw ManifestMismatch("node '" + name + "' not found in " + part);
    };
    auto find_init = [&](const std::string& part, const std::string& name) -> const TensorData& {
        const auto& inits = side_of(part, d, e).graph.initializers;
        auto it = inits.find(name);
        if (it == inits.end())
        {
            throw ManifestMismatch("initializer '" + name + "' not found in " + part);
        }
        return it->second;
    };

    std::map<int64_t, NodeIR> placed;
    auto place = [&](int64_t index, NodeIR node) {
        if (index < 0 || !placed.emplace(index, std::move(node)).second)
        {
            throw ManifestMismatch("source index " + std::to_string(index) + " is claimed twice");
        }
    };

    std::set<std::pair<std::string, std::string>> pieceInits; // (partition, initializer) owned by split pieces
    std::map<std::string, TensorData> fused;
    std::set<std::pair<std::string, std::string>> splitNodes;
    for (const auto& s : m.channel_splits)
    {
        const NodeIR* first = nullptr;
        std::vector<float> weight;
        std::vector<float> bias;
        Shape rowShape;
        std::vector<std::string> pieceOutputs;
        for (const auto& seg : s.channel_order)
        {
            const NodeIR& piece = find_node(seg.partition, seg.node);
            splitNodes.emplace(seg.partition, seg.node);
            if (piece.op_type != "Conv" || piece.inputs.size() < 2)
            {
                throw ManifestMismatch("channel piece '" + seg.node + "' is not a Conv");
            }
            if (first && (piece.attributes.size() != first->attributes.size() ||
                          !std::equal(piece.attributes.begin(), piece.attributes.end(), first->attributes.begin(),
                                      [](const auto& a, const auto& b) {
                                          return a.first == b.first && attribute_equal(a.second, b.second);
                                      }) ||
                          piece.inputs[0] != first->inputs[0] || piece.inputs.size() != first->inputs.size()))
            {
                throw ManifestMismatch("channel pieces of '" + s.original_output + "' disagree");
            }
            if (!first)
            {
                first = &piece;
            }
            const TensorData& w = find_init(seg.partition, piece.inputs[1]);
            pieceInits.emplace(seg.partition, piece.inputs[1]);
            Shape rs(w.shape.begin() + (w.shape.empty() ? 0 : 1), w.shape.end());
            if (w.shape.empty() || w.shape[0] != seg.end - seg.start || (!rowShape.empty() && rs != rowShape) ||
                w.type != ElementType::kFloat32)
            {
                throw ManifestMismatch("weight of channel piece '" + seg.node + "' does not hold its rows");
            }
            rowShape = rs;
            weight.insert(weight.end(), w.f32.begin(), w.f32.end());
            const bool hasBias = piece.inputs.size() > 2 && !piece.inputs[2].empty();
            if (hasBias != !s.original_bias.empty())
            {
                throw ManifestMismatch("bias presence of channel piece '" + seg.node + "' is inconsistent");
            }
            if (hasBias)
            {
                const TensorData& b = find_init(seg.partition, piece.inputs[2]);
                pieceInits.emplace(seg.partition, piece.inputs[2]);
                if (b.shape != Shape{seg.end - seg.start} || b.type != ElementType::kFloat32)
                {
                    throw ManifestMismatch("bias of channel piece '" + seg.node + "' does not hold its rows");
                }
                bias.insert(bias.end(), b.f32.begin(), b.f32.end());
            }
            pieceOutputs.push_back(piece.outputs.at(0));
        }
        if (!first)
        {
            throw ManifestMismatch("channel split of '" + s.original_output + "' has no segments");
        }
        const NodeIR& merge = find_node(s.merge_partition, s.merge_node);
        splitNodes.emplace(s.merge_partition, s.merge_node);
        auto axis = merge.attributes.find("axis");
        if (merge.op_type != "Concat" || axis == merge.attributes.end() ||
            !attribute_equal(axis->second, AttributeValue{int64_t{1}}) || merge.inputs != pieceOutputs ||
            merge.outputs != std::vector<std::string>{s.original_output})
        {
            throw ManifestMismatch("merge node '" + s.merge_node + "' does not restore the channel order");
        }
        NodeIR node = *first;
        node.name = s.original_node;
        node.inputs[1] = s.original_weight;
        if (!s.original_bias.empty())
        {
            node.inputs[2] = s.original_bias;
        }
        node.outputs = {s.original_output};
        Shape wShape = rowShape;
        wShape.insert(wShape.begin(), s.out_channels);
        if (!fused.emplace(s.original_weight, TensorData::make_f32(wShape, std::move(weight))).second ||
            (!s.original_bias.empty() &&
             !fused.emplace(s.original_bias, TensorData::make_f32({s.out_channels}, std::move(bias))).second))
        {
            throw ManifestMismatch("fused parameter of '" + s.original_output + "' collides");
        }
        place(s.source_index, std::move(node));
    }

    for (const auto& r : m.reassembly)
    {
        if (r.role == "whole")
        {
            NodeIR node = find_node(r.partition, r.node);
            node.name = r.source_name;
            place(r.source_index, std::move(node));
        }
        else if (!splitNodes.count({r.partition, r.node}))
        {
            throw ManifestMismatch("piece '" + r.node + "' is not part of any channel split");
        }
    }

    GraphIR g;
    g.name = d.graph.name;
    g.opset_version = d.graph.opset_version;
    int64_t expect = 0;
    for (auto& [index, node] : placed)
    {
        if (index != expect++)
        {
            throw ManifestMismatch("source node indices are not contiguous");
        }
        g.nodes.push_back(std::move(node));
    }
    const std::pair<const ModelFile*, std::string> files[] = {{&d, std::string(kD)}, {&e, std::string(kE)}};
    for (const auto& [file, part] : files)
    {
        for (const auto& [name, t] : file->graph.initializers)
        {
            if (pieceInits.count({part, name}))
            {
                continue;
            }
            auto [it, inserted] = g.initializers.emplace(name, t);
            if (!inserted && !(it->second == t))
            {
                throw ManifestMismatch("initializer '" + name + "' differs between D and E");
            }
        }
    }
    for (auto& [name, t] : fused)
    {
        if (!g.initializers.emplace(name, std::move(t)).second)
        {
            throw ManifestMismatch("fused parameter '" + name + "' collides with an existing initializer");
        }
    }
    for (const auto& name : m.source_inputs)
    {
        const ValueInfo* a = find_value(d.graph.inputs, name);
        const ValueInfo* b = find_value(e.graph.inputs, name);
        if (a && b && !(*a == *b))
        {
            throw ManifestMismatch("D and E disagree on source input '" + name + "'");
        }
        g.inputs.push_back(a ? *a : *b);
    }
    for (const auto& name : m.source_outputs)
    {
        const ValueInfo* a = find_value(d.graph.outputs, name);
        const ValueInfo* b = find_value(e.graph.outputs, name);
        g.outputs.push_back(b ? *b : *a);
    }
    g.metadata = public_metadata(d.graph);
    try
    {
        validate(g);
        infer_types(g);
    }
    catch (const Error& err)
    {
        throw ManifestMismatch(std::string("recombined graph is invalid: ") + err.what());
    }
    return g;
}

RecombinationReport validate_recombination(const ModelFile& d, const ModelFile& e, const PartitionManifest& manifest,
                                           const ModelFile& c)
{
    const GraphIR g = recombine(d, e, manifest);
    RecombinationReport r;
    r.verdict = compare(g, c.graph);
    r.weights_identical = g.initializers == c.graph.initializers;
    return r;
}

} // namespace saiw
