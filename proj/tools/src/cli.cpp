#include "cli.hpp"

#include "csl/dataset.hpp"
#include "csl/error.hpp"
#include "csl/estimators.hpp"
#include "csl/evaluation.hpp"
#include "csl/subspace.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

namespace csl::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------------------
// helpers

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorKind::Io, "cannot open '" + path.string() + "' for reading");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorKind::Io, "cannot open '" + path.string() + "' for writing");
    }
    out << text;
    if (!out) {
        throw Error(ErrorKind::Io, "failed writing '" + path.string() + "'");
    }
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw Error(ErrorKind::Io, "cannot create directory '" + dir.string() + "': " + ec.message());
    }
}

std::vector<std::string> split_on(const std::string& text, char sep) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : text) {
        if (c == sep) {
            parts.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    parts.push_back(cur);
    return parts;
}

double parse_double(const std::string& text, const std::string& what) {
    try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used == text.size() && std::isfinite(v)) {
            return v;
        }
    } catch (const std::exception&) {
    }
    throw Error(ErrorKind::Configuration, "invalid number '" + text + "' in " + what);
}

std::uint64_t parse_u64(const std::string& text, const std::string& what) {
    try {
        std::size_t used = 0;
        const unsigned long long v = std::stoull(text, &used);
        if (used == text.size() && !text.empty() && text[0] != '-') {
            return v;
        }
    } catch (const std::exception&) {
    }
    throw Error(ErrorKind::Configuration, "invalid unsigned integer '" + text + "' in " + what);
}

std::uint64_t fnv1a(const std::vector<std::size_t>& idx) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t v : idx) {
        auto x = static_cast<std::uint64_t>(v);
        for (int b = 0; b < 8; ++b) {
            h ^= (x >> (8 * b)) & 0xFF;
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    std::ostringstream ss;
    ss << std::hex << std::setw(16) << std::setfill('0') << v;
    return ss.str();
}

json matrix_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            row.push_back(m(i, j));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

LabeledDataset with_provenance(const LabeledDataset& ds, const std::string& extra) {
    std::string prov = ds.provenance();
    if (!prov.empty()) {
        prov += ' ';
    }
    return LabeledDataset(ds.features(), ds.concepts(), prov + extra);
}

void print_summary(std::ostream& out, const LabeledDataset& ds) {
    out << "N=" << ds.rows() << " D=" << ds.dim() << " concepts:";
    for (const auto& c : ds.concepts()) {
        out << ' ' << c.name << '(' << c.num_classes() << ')';
    }
    out << '\n';
}

// ---------------------------------------------------------------------------
// option plumbing: --config JSON, CSL_SEED, and the recorded run config

bool is_meta(const CLI::Option* opt) {
    const auto& names = opt->get_lnames();
    return names.empty() || names.front() == "help" || names.front() == "config";
}

std::string key_of(const CLI::Option* opt) { return opt->get_lnames().front(); }

CLI::Option* find_by_key(CLI::App* sub, const std::string& key) {
    for (CLI::Option* opt : sub->get_options()) {
        if (is_meta(opt)) {
            continue;
        }
        std::string k = key_of(opt);
        std::string alt = k;
        for (auto& c : alt) {
            if (c == '-') {
                c = '_';
            }
        }
        if (key == k || key == alt) {
            return opt;
        }
    }
    return nullptr;
}

std::string json_scalar(const json& v) {
    if (v.is_string()) {
        return v.get<std::string>();
    }
    if (v.is_boolean()) {
        return v.get<bool>() ? "true" : "false";
    }
    if (v.is_number() || v.is_null()) {
        return v.dump();
    }
    throw Error(ErrorKind::Configuration, "config values must be scalars or arrays of scalars");
}

/// Fill options that were not given on the command line from a JSON object.
void apply_config(CLI::App* sub, const std::string& path) {
    json cfg;
    try {
        cfg = json::parse(read_text(path));
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Configuration, "config '" + path + "' is not valid JSON: " + e.what());
    }
    if (!cfg.is_object()) {
        throw Error(ErrorKind::Configuration, "config '" + path + "' must be a JSON object");
    }
    for (const auto& [key, value] : cfg.items()) {
        if (key == "command") {
            if (value != sub->get_name()) {
                throw Error(ErrorKind::Configuration, "config is for command '" + json_scalar(value) +
                                                          "', not '" + sub->get_name() + "'");
            }
            continue;
        }
        if (key == "tool" || key == "version") {
            continue;
        }
        CLI::Option* opt = find_by_key(sub, key);
        if (opt == nullptr) {
            throw Error(ErrorKind::Configuration, "unknown config key '" + key + "'");
        }
        if (opt->count() > 0) {
            continue;
        }
        if (value.is_array()) {
            for (const auto& item : value) {
                opt->add_result(json_scalar(item));
            }
        } else {
            opt->add_result(json_scalar(value));
        }
        opt->run_callback();
    }
}

void apply_seed_env(CLI::App* sub) {
    const char* env = std::getenv("CSL_SEED");
    if (env == nullptr || *env == '\0') {
        return;
    }
    for (const char* key : {"seed", "seeds"}) {
        CLI::Option* opt = find_by_key(sub, key);
        if (opt != nullptr && opt->count() == 0) {
            parse_u64(env, "CSL_SEED");
            opt->add_result(env);
            opt->run_callback();
        }
    }
}

/// Every resolved option, keyed by its long name. Feeding this object back
/// through --config reproduces the run.
json run_config(CLI::App* sub) {
    json cfg;
    cfg["command"] = sub->get_name();
    for (CLI::Option* opt : sub->get_options()) {
        if (is_meta(opt)) {
            continue;
        }
        const std::string key = key_of(opt);
        if (opt->count() > 0) {
            const auto& res = opt->results();
            if (opt->get_expected_max() > 1 || res.size() > 1) {
                cfg[key] = res;
            } else {
                cfg[key] = res.front();
            }
        } else if (!opt->get_default_str().empty() && opt->get_type_size() != 0) {
            const std::string def = opt->get_default_str();
            if (opt->get_expected_max() > 1 && def.size() >= 2 && def.front() == '[' && def.back() == ']') {
                cfg[key] = split_on(def.substr(1, def.size() - 2), ',');
            } else {
                cfg[key] = def;
            }
        }
    }
    return cfg;
}

// ---------------------------------------------------------------------------
// shared option groups

struct ProbeOptions {
    double ridge = TrainConfig{}.ridge;
    int max_iter = TrainConfig{}.max_iter;
    double grad_tol = TrainConfig{}.grad_tol;

    void add(CLI::App* sub) {
        sub->add_option("--ridge", ridge, "Probe L2 penalty")->capture_default_str();
        sub->add_option("--max-iter", max_iter, "Probe iteration cap")->capture_default_str();
        sub->add_option("--grad-tol", grad_tol, "Probe gradient tolerance")->capture_default_str();
    }
    TrainConfig config(std::uint64_t seed) const {
        TrainConfig c;
        c.ridge = ridge;
        c.max_iter = max_iter;
        c.grad_tol = grad_tol;
        c.seed = seed;
        c.validate();
        return c;
    }
};

void require(const std::string& value, const char* flag) {
    if (value.empty()) {
        throw Error(ErrorKind::Configuration, std::string(flag) + " is required");
    }
}

// ---------------------------------------------------------------------------
// convert / dump-csv

struct ConvertOptions {
    std::string input;
    std::string output;
    std::vector<std::string> features;
    std::vector<std::string> labels;
    std::string provenance;
};

int cmd_convert(const ConvertOptions& o, const json& cfg, std::ostream& out) {
    require(o.input, "--input");
    require(o.output, "--output");
    if (o.labels.empty()) {
        throw Error(ErrorKind::Configuration, "--labels names at least one label column");
    }
    CsvSchema schema;
    schema.feature_columns = o.features;
    schema.label_columns = o.labels;
    schema.provenance = (o.provenance.empty() ? "csv=" + fs::path(o.input).filename().string() : o.provenance) +
                        " run_config=" + cfg.dump();
    const LabeledDataset ds = import_csv_file(o.input, schema);
    save(ds, o.output);
    print_summary(out, ds);
    return 0;
}

struct DumpOptions {
    std::string input;
    std::string output;
};

int cmd_dump_csv(const DumpOptions& o, std::ostream& out) {
    require(o.input, "--input");
    const std::string text = export_csv(load(o.input));
    if (o.output.empty() || o.output == "-") {
        out << text;
    } else {
        write_text(o.output, text);
    }
    return 0;
}

// ---------------------------------------------------------------------------
// split

struct SplitOptions {
    std::string input;
    std::string out_dir = ".";
    std::uint64_t seed = 0;
    std::string mode = "random-stratified";
    std::string concept_name;
    std::vector<double> fractions{0.5, 0.3, 0.2};
};

SplitSpec split_spec(std::uint64_t seed, const std::string& mode, const std::string& concept_name,
                     const std::vector<double>& fractions) {
    if (fractions.size() != 3) {
        throw Error(ErrorKind::Configuration, "--fractions takes exactly three values");
    }
    SplitSpec spec;
    spec.seed = seed;
    spec.mode = parse_split_mode(mode);
    spec.concept_name = concept_name;
    spec.fractions = {fractions[0], fractions[1], fractions[2]};
    spec.validate();
    return spec;
}

int cmd_split(const SplitOptions& o, const json& cfg, std::ostream& out) {
    require(o.input, "--input");
    const LabeledDataset ds = load(o.input);
    const SplitSpec spec = split_spec(o.seed, o.mode, o.concept_name, o.fractions);
    const SplitResult r = split(ds, spec);
    const fs::path dir = o.out_dir;
    ensure_dir(dir);
    const std::string tag = "run_config=" + cfg.dump();
    save(with_provenance(r.space_train, tag), dir / "space_train.csld");
    save(with_provenance(r.probe_train, tag), dir / "probe_train.csld");
    save(with_provenance(r.test, tag), dir / "test.csld");

    json m;
    m["tool"] = "csl";
    m["version"] = version();
    m["run_config"] = cfg;
    m["input"] = o.input;
    m["seed"] = spec.seed;
    m["mode"] = to_string(spec.mode);
    m["concept"] = spec.concept_name;
    m["fractions"] = {{"space_train", spec.fractions.space_train},
                      {"probe_train", spec.fractions.probe_train},
                      {"test", spec.fractions.test}};
    m["sizes"] = {{"space_train", r.indices.space_train.size()},
                  {"probe_train", r.indices.probe_train.size()},
                  {"test", r.indices.test.size()}};
    m["index_hashes"] = {{"algorithm", "fnv1a-64 over u64 little-endian row indices"},
                         {"space_train", hex64(fnv1a(r.indices.space_train))},
                         {"probe_train", hex64(fnv1a(r.indices.probe_train))},
                         {"test", hex64(fnv1a(r.indices.test))}};
    m["files"] = {{"space_train", "space_train.csld"},
                  {"probe_train", "probe_train.csld"},
                  {"test", "test.csld"}};
    if (spec.mode == SplitMode::DisjointLabel) {
        const std::string& name = spec.concept_name.empty() ? ds.concepts().front().name : spec.concept_name;
        const Concept& c = ds.get_concept(name);
        std::set<Label> space, rest;
        for (std::size_t i : r.indices.space_train) {
            space.insert(c.labels[i]);
        }
        for (const auto* part : {&r.indices.probe_train, &r.indices.test}) {
            for (std::size_t i : *part) {
                rest.insert(c.labels[i]);
            }
        }
        bool disjoint = true;
        for (Label y : space) {
            disjoint = disjoint && rest.count(y) == 0;
        }
        if (!disjoint) {
            throw Error(ErrorKind::Protocol, "disjoint-label split produced overlapping label sets");
        }
        auto names = [&](const std::vector<Label>& ys) {
            std::vector<std::string> out_names;
            for (Label y : ys) {
                out_names.push_back(c.class_names[y]);
            }
            return out_names;
        };
        m["disjoint"] = {{"concept", name},
                         {"space_labels", names(r.indices.space_labels)},
                         {"rest_labels", names(r.indices.rest_labels)},
                         {"label_sets_disjoint", disjoint}};
    }
    write_text(dir / "split_manifest.json", m.dump(2) + "\n");
    out << "space_train " << r.indices.space_train.size() << " probe_train " << r.indices.probe_train.size()
        << " test " << r.indices.test.size() << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// generate

struct GenerateOptions {
    std::string output;
    std::string bases;
    Eigen::Index dim = 16;
    Eigen::Index signal_dim = 2;
    std::vector<std::string> concepts;
    std::vector<std::string> mirrors;
    std::string overlap = "orthogonal";
    Eigen::Index shared_dims = 0;
    double ambient_noise = 1.0;
    double nuisance_noise = 0.0;
    std::string layout = "gaussian";
    double label_noise = 0.0;
    bool noiseless = false;
    double snr = 0.0;
    std::size_t rows = 1000;
    std::uint64_t seed = 0;
    std::uint64_t basis_seed = 1;
};

OverlapPolicy parse_overlap(const std::string& text) {
    if (text == "orthogonal") {
        return OverlapPolicy::Orthogonal;
    }
    if (text == "shared") {
        return OverlapPolicy::Shared;
    }
    if (text == "random") {
        return OverlapPolicy::Random;
    }
    throw Error(ErrorKind::Configuration, "unknown overlap policy '" + text + "'");
}

MeanLayout parse_layout(const std::string& text) {
    if (text == "gaussian") {
        return MeanLayout::Gaussian;
    }
    if (text == "simplex") {
        return MeanLayout::Simplex;
    }
    throw Error(ErrorKind::Configuration, "unknown mean layout '" + text + "'");
}

int cmd_generate(const GenerateOptions& o, const json& cfg, std::ostream& out) {
    require(o.output, "--output");
    if (o.concepts.empty()) {
        throw Error(ErrorKind::Configuration, "--concept NAME:CLASSES[:MEAN_SCALE[:NOISE]] is required");
    }
    if (o.snr < 0.0) {
        throw Error(ErrorKind::Configuration, "--snr must be >= 0");
    }
    PlantedSpec spec;
    spec.dim = o.dim;
    spec.signal_dim = o.signal_dim;
    spec.overlap = parse_overlap(o.overlap);
    spec.shared_dims = o.shared_dims;
    spec.ambient_noise = o.noiseless ? 0.0 : o.ambient_noise;
    spec.nuisance_noise = o.noiseless ? 0.0 : o.nuisance_noise;
    const MeanLayout layout = parse_layout(o.layout);
    std::uint64_t basis_seed = o.basis_seed;
    for (const auto& text : o.concepts) {
        const auto parts = split_on(text, ':');
        if (parts.size() < 2 || parts.size() > 4 || parts[0].empty()) {
            throw Error(ErrorKind::Configuration, "--concept expects NAME:CLASSES[:MEAN_SCALE[:NOISE]], got '" +
                                                      text + "'");
        }
        PlantedConcept c;
        c.name = parts[0];
        c.num_classes = parse_u64(parts[1], "--concept");
        c.basis_seed = basis_seed++;
        c.layout = layout;
        c.label_noise = o.label_noise;
        if (parts.size() > 2) {
            c.mean_scale = parse_double(parts[2], "--concept");
        } else if (o.snr > 0.0) {
            c.mean_scale = std::sqrt(o.snr) * (spec.ambient_noise > 0.0 ? spec.ambient_noise : 1.0);
        }
        if (parts.size() > 3) {
            c.noise_scale = parse_double(parts[3], "--concept");
        }
        spec.concepts.push_back(c);
    }
    for (const auto& text : o.mirrors) {
        const auto parts = split_on(text, ':');
        if (parts.size() < 2 || parts.size() > 3) {
            throw Error(ErrorKind::Configuration, "--mirror expects NAME:SOURCE[:NOISE], got '" + text + "'");
        }
        PlantedConcept c;
        c.name = parts[0];
        c.mirror_of = parts[1];
        c.basis_seed = basis_seed++;
        if (parts.size() > 2) {
            c.noise_scale = parse_double(parts[2], "--mirror");
        }
        spec.concepts.push_back(c);
    }
    const PlantedData data = generate_planted(spec, o.rows, o.seed);
    save(with_provenance(data.dataset, "run_config=" + cfg.dump()), o.output);

    json b;
    b["tool"] = "csl";
    b["version"] = version();
    b["run_config"] = cfg;
    json entries = json::array();
    for (std::size_t e = 0; e < spec.concepts.size(); ++e) {
        json entry;
        entry["name"] = spec.concepts[e].name;
        entry["mirror_of"] = spec.concepts[e].mirror_of ? json(*spec.concepts[e].mirror_of) : json(nullptr);
        entry["basis"] = matrix_json(data.bases[e]);
        entry["class_means"] = matrix_json(data.class_means[e]);
        entries.push_back(std::move(entry));
    }
    b["concepts"] = std::move(entries);
    const std::string bases_path = o.bases.empty() ? o.output + ".bases.json" : o.bases;
    write_text(bases_path, b.dump(2) + "\n");
    print_summary(out, data.dataset);
    return 0;
}

// ---------------------------------------------------------------------------
// estimate

struct EstimateOptions {
    std::string input;
    std::string output;
    std::string estimator = "LEACE";
    std::string concept_name;
    Eigen::Index dim = -1;
    std::uint64_t seed = 0;
    bool allow_missing_classes = false;
    ProbeOptions probe;
};

int cmd_estimate(const EstimateOptions& o, const json& cfg, std::ostream& out) {
    require(o.input, "--input");
    require(o.output, "--output");
    const LabeledDataset ds = load(o.input);
    EstimatorConfig ec;
    ec.probe = o.probe.config(o.seed);
    if (o.dim >= 0) {
        ec.dim = o.dim;
    }
    ec.seed = o.seed;
    ec.allow_missing_classes = o.allow_missing_classes ||
                               ds.provenance().find("split=disjoint-label") != std::string::npos;
    const std::string name = o.concept_name.empty() ? ds.concepts().front().name : o.concept_name;
    ConceptSubspace s = estimate(parse_estimator(o.estimator), ds, name, ec);
    s.provenance += " run_config=" + cfg.dump();
    save_subspace(s, o.output);
    out << "estimator=" << to_string(s.estimator) << " concept=" << s.concept_name << " D=" << s.dim()
        << " rank=" << s.rank() << (s.projector.oblique() ? " oblique" : "") << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// evaluate / sweep

struct EvaluateOptions {
    std::string space_train;
    std::string probe_train;
    std::string test;
    std::string overfit;
    std::string data;
    std::uint64_t split_seed = 0;
    std::string split_mode = "random-stratified";
    std::string split_concept;
    std::vector<double> fractions{0.5, 0.3, 0.2};
    std::vector<std::string> subspaces;
    std::vector<std::string> estimators;
    std::vector<std::string> pairs;
    std::vector<Eigen::Index> dims;
    std::vector<Eigen::Index> sweep_dims;
    std::vector<std::uint64_t> seeds{0};
    int jobs = 1;
    std::string out_dir = ".";
    std::vector<std::string> formats{"json", "csv", "svg"};
    bool keep_probe_weights = false;
    bool allow_missing_classes = false;
    ProbeOptions probe;
};

SplitSet load_splits(const EvaluateOptions& o) {
    const int sources = int(!o.overfit.empty()) + int(!o.data.empty()) + int(!o.probe_train.empty());
    if (sources != 1) {
        throw Error(ErrorKind::Configuration,
                    "give exactly one of --overfit FILE, --data FILE, or --space-train/--probe-train/--test");
    }
    if (!o.overfit.empty()) {
        return overfit_splits(load(o.overfit));
    }
    if (!o.data.empty()) {
        return make_splits(load(o.data), split_spec(o.split_seed, o.split_mode, o.split_concept, o.fractions));
    }
    require(o.test, "--test");
    LabeledDataset probe = load(o.probe_train);
    LabeledDataset test = load(o.test);
    LabeledDataset space = o.space_train.empty() ? probe : load(o.space_train);
    const bool disjoint = space.provenance().find("split=disjoint-label") != std::string::npos;
    std::string prov = "space-train=" + (o.space_train.empty() ? std::string("(none)") : o.space_train) +
                       " probe-train=" + o.probe_train + " test=" + o.test;
    return SplitSet{std::move(space), std::move(probe), std::move(test), prov, disjoint};
}

std::vector<ConceptPair> resolve_pairs(const EvaluateOptions& o, const LabeledDataset& ds) {
    std::vector<ConceptPair> pairs;
    for (const auto& text : o.pairs) {
        const auto parts = split_on(text, ':');
        if (parts.size() != 2 || parts[0].empty() || parts[1].empty()) {
            throw Error(ErrorKind::Configuration, "--pair expects CONCEPT:OTHER, got '" + text + "'");
        }
        pairs.push_back({parts[0], parts[1]});
    }
    if (pairs.empty()) {
        const auto& cs = ds.concepts();
        if (cs.size() < 2) {
            throw Error(ErrorKind::Configuration, "evaluation needs two concepts; dataset has " +
                                                      std::to_string(cs.size()));
        }
        for (const auto& a : cs) {
            for (const auto& b : cs) {
                if (a.name != b.name) {
                    pairs.push_back({a.name, b.name});
                }
            }
        }
    }
    return pairs;
}

MetricReport failed_report(const ConceptSubspace& s, const ConceptPair& pair, const std::string& prov,
                           const TrainConfig& probe, const Error& e) {
    MetricReport r;
    r.concept_name = pair.concept_name;
    r.other_concept = pair.other;
    r.estimator = s.estimator;
    r.requested_dim = s.requested_dim;
    r.rank = s.rank();
    r.split_provenance = prov;
    r.probe_config = probe;
    r.error = e.what();
    r.error_kind = to_string(e.kind());
    return r;
}

int cmd_evaluate(const EvaluateOptions& o, bool sweep, const json& cfg, std::ostream& out,
                 std::ostream& err) {
    const SplitSet splits = load_splits(o);
    ProtocolConfig pc;
    pc.pairs = resolve_pairs(o, splits.probe_train);
    pc.seeds = o.seeds;
    pc.probe = o.probe.config(o.seeds.empty() ? 0 : o.seeds.front());
    pc.jobs = o.jobs;
    pc.keep_probe_weights = o.keep_probe_weights;
    pc.allow_missing_classes = o.allow_missing_classes;
    const std::vector<Eigen::Index>& sweep_dims = sweep ? o.dims : o.sweep_dims;
    if (sweep && o.dims.empty()) {
        throw Error(ErrorKind::Configuration, "sweep needs --dims");
    }
    const bool sweeping = !sweep_dims.empty();
    if (!o.estimators.empty()) {
        pc.estimators.clear();
        for (const auto& e : o.estimators) {
            pc.estimators.push_back(parse_estimator(e));
        }
    } else if (sweeping) {
        pc.estimators = {EstimatorKind::Leace};
    }
    if (!sweeping) {
        pc.dims = o.dims;
    }
    pc.validate();

    std::vector<MetricReport> reports;
    if (!o.subspaces.empty()) {
        std::map<std::pair<std::string, std::string>, Bounds> bounds;
        for (const auto& path : o.subspaces) {
            const ConceptSubspace s = load_subspace(path);
            for (const auto& pair : pc.pairs) {
                if (pair.concept_name != s.concept_name) {
                    continue;
                }
                try {
                    const auto key = std::make_pair(pair.concept_name, pair.other);
                    if (bounds.count(key) == 0) {
                        bounds[key] = compute_bounds(splits.probe_train, splits.test, pair.concept_name,
                                                     pair.other, pc.probe);
                    }
                    MetricReport r = evaluate_subspace(s, splits.probe_train, splits.test, pair, bounds[key],
                                                       pc.probe, pc.keep_probe_weights);
                    r.split_provenance = splits.provenance;
                    reports.push_back(std::move(r));
                } catch (const Error& e) {
                    reports.push_back(failed_report(s, pair, splits.provenance, pc.probe, e));
                }
            }
        }
        if (reports.empty()) {
            throw Error(ErrorKind::Configuration, "no --pair matches the concept of any --subspace artifact");
        }
    } else if (sweeping) {
        for (EstimatorKind kind : pc.estimators) {
            for (const auto& pair : pc.pairs) {
                auto rs = sweep_dimension(splits, pair, sweep_dims, pc, kind);
                reports.insert(reports.end(), std::make_move_iterator(rs.begin()),
                               std::make_move_iterator(rs.end()));
            }
        }
    } else {
        reports = run_protocol(splits, pc);
    }

    const fs::path dir = o.out_dir;
    ensure_dir(dir);
    const std::string cfg_text = cfg.dump();
    for (const auto& f : o.formats) {
        if (f == "json") {
            write_text(dir / "reports.json", reports_to_json(reports, cfg_text));
        } else if (f == "csv") {
            write_text(dir / "reports.csv", reports_to_csv(reports, cfg_text));
        } else if (f == "svg") {
            write_text(dir / "reports.svg", reports_to_svg(reports, cfg_text));
        } else {
            throw Error(ErrorKind::Configuration, "unknown output format '" + f + "'");
        }
    }

    std::size_t failed = 0;
    std::string first_kind;
    out << std::fixed << std::setprecision(1);
    for (const auto& r : reports) {
        out << to_string(r.estimator) << ' ' << r.concept_name << '|' << r.other_concept;
        if (r.requested_dim) {
            out << " M=" << *r.requested_dim;
        }
        if (r.ok()) {
            out << " rank=" << r.rank << " ret=" << r.metrics.retention << " leak=" << r.metrics.leakage
                << " pur=" << r.metrics.purity << " int=" << r.metrics.interference << '\n';
        } else {
            out << " error(" << r.error_kind << "): " << *r.error << '\n';
            if (failed++ == 0) {
                first_kind = r.error_kind;
            }
        }
    }
    if (failed > 0) {
        err << json{{"warning", {{"failed_reports", failed}, {"total_reports", reports.size()}}}}.dump() << '\n';
    }
    if (failed == reports.size() && failed > 0) {
        for (int k = 0; k <= static_cast<int>(ErrorKind::Io); ++k) {
            if (first_kind == to_string(static_cast<ErrorKind>(k))) {
                return exit_code(static_cast<ErrorKind>(k));
            }
        }
        return 3;
    }
    return 0;
}

void add_evaluate_options(CLI::App* sub, EvaluateOptions& o, bool sweep) {
    sub->add_option("--space-train", o.space_train, "Space-train container");
    sub->add_option("--probe-train", o.probe_train, "Probe-train container");
    sub->add_option("--test", o.test, "Test container");
    sub->add_option("--overfit", o.overfit, "Use one container for all three roles");
    sub->add_option("--data", o.data, "Split this container in-process");
    sub->add_option("--split-seed", o.split_seed, "Seed for --data splitting")->capture_default_str();
    sub->add_option("--split-mode", o.split_mode, "random-stratified | disjoint-label")->capture_default_str();
    sub->add_option("--split-concept", o.split_concept, "Concept that drives --data splitting");
    sub->add_option("--fractions", o.fractions, "space,probe,test fractions")->delimiter(',')->capture_default_str();
    if (!sweep) {
        sub->add_option("--subspace", o.subspaces, "Evaluate saved .csub artifacts");
    }
    sub->add_option("--estimators", o.estimators, "Estimators (MLR,LDA,CPCA,COV,LEACE,RAND)")->delimiter(',');
    sub->add_option("--pair", o.pairs, "CONCEPT:OTHER (repeatable; default all ordered pairs)");
    sub->add_option("--dims", o.dims, sweep ? "Subspace dimensions to sweep" : "Subspace dimensions")
        ->delimiter(',');
    if (!sweep) {
        sub->add_option("--sweep-dims", o.sweep_dims, "Dimension sweep (default estimator LEACE)")->delimiter(',');
    }
    sub->add_option("--seeds", o.seeds, "Seeds (RAND is averaged over all)")->delimiter(',')->capture_default_str();
    sub->add_option("--jobs", o.jobs, "Parallel tasks")->capture_default_str();
    sub->add_option("--out-dir", o.out_dir, "Output directory")->capture_default_str();
    sub->add_option("--formats", o.formats, "json,csv,svg")->delimiter(',')->capture_default_str();
    sub->add_flag("--keep-probe-weights", o.keep_probe_weights, "Include probe weights in the JSON report");
    sub->add_flag("--allow-missing-classes", o.allow_missing_classes, "CPCA skips classes absent from space-train");
    o.probe.add(sub);
}

void write_error(std::ostream& err, const std::string& kind, const std::string& message, int code) {
    err << json{{"error", {{"kind", kind}, {"message", message}, {"exit_code", code}}}}.dump() << '\n';
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Concept subspace estimation and evaluation", "csl"};
    app.set_version_flag("--version", version());
    app.require_subcommand(1);

    std::string config_path;
    auto add_config = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON file filling options not given on the command line");
    };

    ConvertOptions convert_o;
    auto* convert = app.add_subcommand("convert", "CSV to container");
    convert->add_option("--input", convert_o.input, "CSV file");
    convert->add_option("--output", convert_o.output, "Container to write");
    convert->add_option("--features", convert_o.features, "Feature columns (default: all non-label)")
        ->delimiter(',');
    convert->add_option("--labels", convert_o.labels, "Label columns, one concept each")->delimiter(',');
    convert->add_option("--provenance", convert_o.provenance, "Provenance note");
    add_config(convert);

    DumpOptions dump_o;
    auto* dump = app.add_subcommand("dump-csv", "Container to CSV");
    dump->add_option("--input", dump_o.input, "Container");
    dump->add_option("--output", dump_o.output, "CSV file (default stdout)");
    add_config(dump);

    SplitOptions split_o;
    auto* split_cmd = app.add_subcommand("split", "Space-train / probe-train / test split");
    split_cmd->add_option("--input", split_o.input, "Container");
    split_cmd->add_option("--out-dir", split_o.out_dir, "Output directory")->capture_default_str();
    split_cmd->add_option("--seed", split_o.seed, "Split seed")->capture_default_str();
    split_cmd->add_option("--mode", split_o.mode, "random-stratified | disjoint-label")->capture_default_str();
    split_cmd->add_option("--concept", split_o.concept_name, "Stratification or disjoint-label concept");
    split_cmd->add_option("--fractions", split_o.fractions, "space,probe,test fractions")
        ->delimiter(',')
        ->capture_default_str();
    add_config(split_cmd);

    GenerateOptions gen_o;
    auto* gen = app.add_subcommand("generate", "Synthetic planted-subspace data");
    gen->add_option("--output", gen_o.output, "Container to write");
    gen->add_option("--bases", gen_o.bases, "Ground-truth bases JSON (default OUTPUT.bases.json)");
    gen->add_option("--dim", gen_o.dim, "Ambient dimension D")->capture_default_str();
    gen->add_option("--signal-dim", gen_o.signal_dim, "Planted dimension K per concept")->capture_default_str();
    gen->add_option("--concept", gen_o.concepts, "NAME:CLASSES[:MEAN_SCALE[:NOISE]] (repeatable)");
    gen->add_option("--mirror", gen_o.mirrors, "NAME:SOURCE[:NOISE] redundant copy of a concept");
    gen->add_option("--overlap", gen_o.overlap, "orthogonal | shared | random")->capture_default_str();
    gen->add_option("--shared-dims", gen_o.shared_dims, "Shared policy overlap")->capture_default_str();
    gen->add_option("--ambient-noise", gen_o.ambient_noise, "Isotropic noise std")->capture_default_str();
    gen->add_option("--nuisance-noise", gen_o.nuisance_noise, "Noise std outside all planted subspaces")
        ->capture_default_str();
    gen->add_option("--layout", gen_o.layout, "Class mean layout: gaussian | simplex")->capture_default_str();
    gen->add_option("--label-noise", gen_o.label_noise, "Fraction of labels redrawn uniformly")
        ->capture_default_str();
    gen->add_flag("--noiseless", gen_o.noiseless, "No ambient or nuisance noise");
    gen->add_option("--snr", gen_o.snr, "Per-coordinate mean variance over noise variance");
    gen->add_option("--rows", gen_o.rows, "Number of rows")->capture_default_str();
    gen->add_option("--seed", gen_o.seed, "Row seed")->capture_default_str();
    gen->add_option("--basis-seed", gen_o.basis_seed, "First basis seed")->capture_default_str();
    add_config(gen);

    EstimateOptions est_o;
    auto* est = app.add_subcommand("estimate", "Fit one concept subspace");
    est->add_option("--input", est_o.input, "Space-train container");
    est->add_option("--output", est_o.output, ".csub artifact to write");
    est->add_option("--estimator", est_o.estimator, "MLR | LDA | CPCA | COV | LEACE | RAND")->capture_default_str();
    est->add_option("--concept", est_o.concept_name, "Concept (default first)");
    est->add_option("--dim", est_o.dim, "Subspace dimension (default natural)");
    est->add_option("--seed", est_o.seed, "Seed (RAND, probes)")->capture_default_str();
    est->add_flag("--allow-missing-classes", est_o.allow_missing_classes, "CPCA skips absent classes");
    est_o.probe.add(est);
    add_config(est);

    EvaluateOptions eval_o;
    auto* eval = app.add_subcommand("evaluate", "Four-metric evaluation");
    add_evaluate_options(eval, eval_o, false);
    add_config(eval);

    EvaluateOptions sweep_o;
    auto* sweep = app.add_subcommand("sweep", "Metrics across subspace dimensions");
    add_evaluate_options(sweep, sweep_o, true);
    add_config(sweep);

    try {
        try {
            app.parse(argc, argv);
        } catch (const CLI::CallForHelp&) {
            out << app.help();
            return 0;
        } catch (const CLI::CallForAllHelp&) {
            out << app.help("", CLI::AppFormatMode::All);
            return 0;
        } catch (const CLI::CallForVersion&) {
            out << version() << '\n';
            return 0;
        }
        CLI::App* sub = app.get_subcommands().front();
        if (!config_path.empty()) {
            apply_config(sub, config_path);
        }
        apply_seed_env(sub);
        const json cfg = run_config(sub);

        if (sub == convert) {
            return cmd_convert(convert_o, cfg, out);
        }
        if (sub == dump) {
            return cmd_dump_csv(dump_o, out);
        }
        if (sub == split_cmd) {
            return cmd_split(split_o, cfg, out);
        }
        if (sub == gen) {
            return cmd_generate(gen_o, cfg, out);
        }
        if (sub == est) {
            return cmd_estimate(est_o, cfg, out);
        }
        if (sub == eval) {
            return cmd_evaluate(eval_o, false, cfg, out, err);
        }
        return cmd_evaluate(sweep_o, true, cfg, out, err);
    } catch (const CLI::ParseError& e) {
        write_error(err, "configuration", e.what(), 2);
        return 2;
    } catch (const Error& e) {
        const int code = exit_code(e.kind());
        write_error(err, to_string(e.kind()), e.what(), code);
        return code;
    } catch (const std::exception& e) {
        write_error(err, "internal", e.what(), 3);
        return 3;
    }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    std::vector<const char*> argv{"csl"};
    for (const auto& a : args) {
        argv.push_back(a.c_str());
    }
    return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace csl::cli
