#include "csl/dataset.hpp"

#include "csl/error.hpp"
#include "csl/rng.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace csl {

LabeledDataset::LabeledDataset(Matrix features, std::vector<Concept> concepts,
                               std::string provenance)
    : features_(std::move(features)),
      concepts_(std::move(concepts)),
      provenance_(std::move(provenance)) {
    validate();
}

bool LabeledDataset::has_concept(const std::string& name) const {
    return std::any_of(concepts_.begin(), concepts_.end(),
                       [&](const Concept& c) { return c.name == name; });
}

const Concept& LabeledDataset::get_concept(const std::string& name) const {
    for (const auto& c : concepts_) {
        if (c.name == name) {
            return c;
        }
    }
    throw Error(ErrorKind::Lookup, "no concept named '" + name + "'");
}

LabeledDataset LabeledDataset::subset(const std::vector<std::size_t>& rows,
                                      std::string provenance) const {
    Matrix features(static_cast<Eigen::Index>(rows.size()), dim());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= static_cast<std::size_t>(this->rows())) {
            throw Error(ErrorKind::InputValidation, "subset row index out of range");
        }
        features.row(static_cast<Eigen::Index>(i)) = features_.row(static_cast<Eigen::Index>(rows[i]));
    }
    std::vector<Concept> concepts;
    concepts.reserve(concepts_.size());
    for (const auto& c : concepts_) {
        Concept sub{c.name, c.class_names, {}};
        sub.labels.reserve(rows.size());
        for (std::size_t r : rows) {
            sub.labels.push_back(c.labels[r]);
        }
        concepts.push_back(std::move(sub));
    }
    return LabeledDataset(std::move(features), std::move(concepts), std::move(provenance));
}

void LabeledDataset::validate() const {
    if (features_.rows() < 1 || features_.cols() < 1) {
        throw Error(ErrorKind::InputValidation, "dataset needs N >= 1 and D >= 1, got " +
                                                    std::to_string(features_.rows()) + "x" +
                                                    std::to_string(features_.cols()));
    }
    require_finite(features_, "dataset features");
    std::set<std::string> names;
    for (const auto& c : concepts_) {
        if (c.name.empty()) {
            throw Error(ErrorKind::InputValidation, "concept name must not be empty");
        }
        if (!names.insert(c.name).second) {
            throw Error(ErrorKind::InputValidation, "duplicate concept name '" + c.name + "'");
        }
        if (c.class_names.empty()) {
            throw Error(ErrorKind::InputValidation, "concept '" + c.name + "' has no classes");
        }
        if (c.labels.size() != static_cast<std::size_t>(features_.rows())) {
            throw Error(ErrorKind::InputValidation,
                        "concept '" + c.name + "' has " + std::to_string(c.labels.size()) +
                            " labels for " + std::to_string(features_.rows()) + " rows");
        }
        for (std::size_t i = 0; i < c.labels.size(); ++i) {
            if (c.labels[i] >= c.num_classes()) {
                throw Error(ErrorKind::InputValidation,
                            "concept '" + c.name + "' row " + std::to_string(i) + ": label " +
                                std::to_string(c.labels[i]) + " >= class count " +
                                std::to_string(c.num_classes()));
            }
        }
    }
}

Matrix one_hot(const Labels& labels, std::size_t num_classes) {
    Matrix out = Matrix::Zero(static_cast<Eigen::Index>(labels.size()),
                              static_cast<Eigen::Index>(num_classes));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= num_classes) {
            throw Error(ErrorKind::InputValidation,
                        "one_hot: label " + std::to_string(labels[i]) + " at row " +
                            std::to_string(i) + " is not below " + std::to_string(num_classes));
        }
        out(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;
    std::size_t i = 0;
    if (text.size() >= 3 && text.compare(0, 3, "\xEF\xBB\xBF") == 0) {
        i = 3;  // UTF-8 BOM
    }
    auto end_row = [&] {
        if (field_started || !row.empty()) {
            row.push_back(std::move(field));
            rows.push_back(std::move(row));
        }
        row.clear();
        field.clear();
        field_started = false;
    };
    for (; i < text.size(); ++i) {
        const char ch = text[i];
        if (in_quotes) {
            if (ch == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(ch);
            }
            continue;
        }
        switch (ch) {
        case '"':
            in_quotes = true;
            field_started = true;
            break;
        case ',':
            row.push_back(std::move(field));
            field.clear();
            field_started = true;
            break;
        case '\r':
            break;
        case '\n':
            end_row();
            break;
        default:
            field.push_back(ch);
            field_started = true;
        }
    }
    if (in_quotes) {
        throw Error(ErrorKind::InputValidation, "CSV: unterminated quoted field");
    }
    end_row();
    return rows;
}

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t");
    if (first == std::string::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t");
    return s.substr(first, last - first + 1);
}

bool parse_uint(const std::string& s, unsigned long long& out) {
    if (s.empty()) {
        return false;
    }
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

std::string escape_csv(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) {
        return s;
    }
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') {
            out.push_back('"');
        }
        out.push_back(ch);
    }
    out.push_back('"');
    return out;
}

}  // namespace

LabeledDataset import_csv(const std::string& text, const CsvSchema& schema) {
    const auto rows = parse_csv(text);
    if (rows.empty()) {
        throw Error(ErrorKind::InputValidation, "CSV: missing header row");
    }
    std::vector<std::string> header;
    for (const auto& h : rows[0]) {
        header.push_back(trim(h));
    }
    auto column_of = [&](const std::string& name) -> std::size_t {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) {
            throw Error(ErrorKind::InputValidation, "CSV: no column named '" + name + "'");
        }
        return static_cast<std::size_t>(it - header.begin());
    };
    if (schema.label_columns.empty()) {
        throw Error(ErrorKind::InputValidation, "CSV: at least one label column is required");
    }
    std::vector<std::size_t> label_cols;
    for (const auto& name : schema.label_columns) {
        label_cols.push_back(column_of(name));
    }
    std::vector<std::size_t> feature_cols;
    if (schema.feature_columns.empty()) {
        for (std::size_t j = 0; j < header.size(); ++j) {
            if (std::find(label_cols.begin(), label_cols.end(), j) == label_cols.end()) {
                feature_cols.push_back(j);
            }
        }
    } else {
        for (const auto& name : schema.feature_columns) {
            feature_cols.push_back(column_of(name));
        }
    }
    if (feature_cols.empty()) {
        throw Error(ErrorKind::InputValidation, "CSV: no feature columns selected");
    }

    const std::size_t n = rows.size() - 1;
    Matrix features(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(feature_cols.size()));
    std::vector<std::vector<std::string>> raw_labels(label_cols.size(), std::vector<std::string>(n));
    for (std::size_t i = 0; i < n; ++i) {
        const auto& row = rows[i + 1];
        if (row.size() != header.size()) {
            throw Error(ErrorKind::InputValidation,
                        "CSV: line " + std::to_string(i + 2) + " has " + std::to_string(row.size()) +
                            " fields, header has " + std::to_string(header.size()));
        }
        for (std::size_t j = 0; j < feature_cols.size(); ++j) {
            const std::string cell = trim(row[feature_cols[j]]);
            double value = 0.0;
            const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
            if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(value)) {
                throw Error(ErrorKind::InputValidation,
                            "CSV: line " + std::to_string(i + 2) + " column '" +
                                header[feature_cols[j]] + "' is not a finite number: '" + cell + "'");
            }
            features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = value;
        }
        for (std::size_t c = 0; c < label_cols.size(); ++c) {
            raw_labels[c][i] = trim(row[label_cols[c]]);
        }
    }

    std::vector<Concept> concepts;
    for (std::size_t c = 0; c < label_cols.size(); ++c) {
        std::vector<std::string> names(raw_labels[c].begin(), raw_labels[c].end());
        std::sort(names.begin(), names.end());
        names.erase(std::unique(names.begin(), names.end()), names.end());
        const bool numeric = std::all_of(names.begin(), names.end(), [](const std::string& s) {
            unsigned long long v = 0;
            return parse_uint(s, v);
        });
        if (numeric) {
            std::sort(names.begin(), names.end(), [](const std::string& a, const std::string& b) {
                unsigned long long va = 0;
                unsigned long long vb = 0;
                parse_uint(a, va);
                parse_uint(b, vb);
                return va < vb;
            });
        }
        std::map<std::string, Label> index;
        for (std::size_t k = 0; k < names.size(); ++k) {
            index.emplace(names[k], static_cast<Label>(k));
        }
        Concept parsed{schema.label_columns[c], names, Labels(n)};
        for (std::size_t i = 0; i < n; ++i) {
            parsed.labels[i] = index.at(raw_labels[c][i]);
        }
        concepts.push_back(std::move(parsed));
    }
    return LabeledDataset(std::move(features), std::move(concepts), schema.provenance);
}

LabeledDataset import_csv_file(const std::filesystem::path& path, const CsvSchema& schema) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorKind::Io, "cannot open '" + path.string() + "'");
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    return import_csv(buffer.str(), schema);
}

std::string export_csv(const LabeledDataset& ds) {
    std::string out;
    for (Eigen::Index j = 0; j < ds.dim(); ++j) {
        if (j > 0) {
            out += ',';
        }
        out += "f" + std::to_string(j);
    }
    for (const auto& c : ds.concepts()) {
        out += ',' + escape_csv(c.name);
    }
    out += '\n';
    std::array<char, 64> buf{};
    for (Eigen::Index i = 0; i < ds.rows(); ++i) {
        for (Eigen::Index j = 0; j < ds.dim(); ++j) {
            if (j > 0) {
                out += ',';
            }
            const auto value = static_cast<float>(ds.features()(i, j));
            const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
            out.append(buf.data(), ptr);
        }
        for (const auto& c : ds.concepts()) {
            out += ',' + escape_csv(c.class_names[c.labels[static_cast<std::size_t>(i)]]);
        }
        out += '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// splitting

const char* to_string(SplitMode mode) {
    return mode == SplitMode::RandomStratified ? "random-stratified" : "disjoint-label";
}

SplitMode parse_split_mode(const std::string& text) {
    if (text == "random-stratified" || text == "stratified" || text == "random") {
        return SplitMode::RandomStratified;
    }
    if (text == "disjoint-label" || text == "disjoint") {
        return SplitMode::DisjointLabel;
    }
    throw Error(ErrorKind::Configuration, "unknown split mode '" + text + "'");
}

void SplitSpec::validate() const {
    const std::array<double, 3> f{fractions.space_train, fractions.probe_train, fractions.test};
    for (double x : f) {
        if (!(x > 0.0) || !std::isfinite(x)) {
            throw Error(ErrorKind::Configuration, "split fractions must be positive");
        }
    }
    if (std::abs(f[0] + f[1] + f[2] - 1.0) > 1e-9) {
        throw Error(ErrorKind::Configuration, "split fractions must sum to 1");
    }
    if (mode == SplitMode::DisjointLabel && concept_name.empty()) {
        throw Error(ErrorKind::Configuration, "disjoint-label split needs a concept name");
    }
}

namespace {

/// Per-group allocation to `parts` roles: every role receives floor or ceil
/// of its exact share; leftover rows go to the roles furthest behind their
/// running global target.
class Allocator {
public:
    explicit Allocator(std::vector<double> fractions)
        : fractions_(std::move(fractions)), allocated_(fractions_.size(), 0) {}

    std::vector<std::size_t> allocate(std::size_t group_size) {
        total_ += group_size;
        const std::size_t parts = fractions_.size();
        std::vector<std::size_t> counts(parts);
        std::size_t assigned = 0;
        for (std::size_t p = 0; p < parts; ++p) {
            counts[p] = static_cast<std::size_t>(std::floor(fractions_[p] * static_cast<double>(group_size)));
            assigned += counts[p];
        }
        std::vector<std::size_t> order(parts);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return deficit(a, counts[a]) > deficit(b, counts[b]);
        });
        for (std::size_t k = 0; assigned < group_size; ++k) {
            ++counts[order[k % parts]];
            ++assigned;
        }
        for (std::size_t p = 0; p < parts; ++p) {
            allocated_[p] += counts[p];
        }
        return counts;
    }

private:
    double deficit(std::size_t part, std::size_t pending) const {
        return fractions_[part] * static_cast<double>(total_) -
               static_cast<double>(allocated_[part] + pending);
    }

    std::vector<double> fractions_;
    std::vector<std::size_t> allocated_;
    std::size_t total_ = 0;
};

std::vector<std::vector<std::size_t>> rows_by_label(const Concept& c) {
    std::vector<std::vector<std::size_t>> groups(c.num_classes());
    for (std::size_t i = 0; i < c.labels.size(); ++i) {
        groups[c.labels[i]].push_back(i);
    }
    return groups;
}

// Rows grouped by their label tuple over every concept, tuples ascending.
std::vector<std::vector<std::size_t>> rows_by_joint_label(const LabeledDataset& ds,
                                                          const std::vector<std::size_t>& rows) {
    std::map<std::vector<Label>, std::vector<std::size_t>> by_key;
    std::vector<Label> key(ds.concepts().size());
    for (std::size_t i : rows) {
        for (std::size_t c = 0; c < key.size(); ++c) {
            key[c] = ds.concepts()[c].labels[i];
        }
        by_key[key].push_back(i);
    }
    std::vector<std::vector<std::size_t>> groups;
    groups.reserve(by_key.size());
    for (auto& [k, g] : by_key) {
        groups.push_back(std::move(g));
    }
    return groups;
}

}  // namespace

SplitIndices split_indices(const LabeledDataset& ds, const SplitSpec& spec) {
    spec.validate();
    SplitIndices out;
    const auto& f = spec.fractions;

    if (spec.mode == SplitMode::RandomStratified) {
        if (ds.concepts().empty() && !spec.concept_name.empty()) {
            throw Error(ErrorKind::Lookup, "no concept named '" + spec.concept_name + "'");
        }
        std::vector<std::vector<std::size_t>> groups;
        if (ds.concepts().empty()) {
            groups.emplace_back(static_cast<std::size_t>(ds.rows()));
            std::iota(groups[0].begin(), groups[0].end(), std::size_t{0});
        } else if (!spec.concept_name.empty()) {
            groups = rows_by_label(ds.get_concept(spec.concept_name));
        } else {
            std::vector<std::size_t> all(static_cast<std::size_t>(ds.rows()));
            std::iota(all.begin(), all.end(), std::size_t{0});
            groups = rows_by_joint_label(ds, all);
        }
        Allocator alloc({f.space_train, f.probe_train, f.test});
        for (std::size_t g = 0; g < groups.size(); ++g) {
            auto& rows = groups[g];
            if (rows.empty()) {
                continue;
            }
            Xoshiro256 rng(spec.seed, g);
            shuffle(std::span<std::size_t>(rows), rng);
            const auto counts = alloc.allocate(rows.size());
            auto it = rows.begin();
            out.space_train.insert(out.space_train.end(), it, it + static_cast<std::ptrdiff_t>(counts[0]));
            it += static_cast<std::ptrdiff_t>(counts[0]);
            out.probe_train.insert(out.probe_train.end(), it, it + static_cast<std::ptrdiff_t>(counts[1]));
            it += static_cast<std::ptrdiff_t>(counts[1]);
            out.test.insert(out.test.end(), it, rows.end());
        }
    } else {
        auto groups = rows_by_label(ds.get_concept(spec.concept_name));
        std::vector<Label> present;
        for (std::size_t g = 0; g < groups.size(); ++g) {
            if (!groups[g].empty()) {
                present.push_back(static_cast<Label>(g));
            }
        }
        // seeded tie-break, then stable sort by descending group size
        Xoshiro256 order_rng(spec.seed, 0xD15C0ULL);
        shuffle(std::span<Label>(present), order_rng);
        std::stable_sort(present.begin(), present.end(), [&](Label a, Label b) {
            return groups[a].size() > groups[b].size();
        });
        const double target = f.space_train * static_cast<double>(ds.rows());
        double taken = 0.0;
        std::vector<bool> in_space(groups.size(), false);
        for (Label label : present) {
            const double size = static_cast<double>(groups[label].size());
            if (std::abs(taken + size - target) < std::abs(taken - target)) {
                in_space[label] = true;
                taken += size;
            }
        }
        for (Label label : present) {
            (in_space[label] ? out.space_labels : out.rest_labels).push_back(label);
        }
        std::sort(out.space_labels.begin(), out.space_labels.end());
        std::sort(out.rest_labels.begin(), out.rest_labels.end());
        if (out.space_labels.size() < 2 || out.rest_labels.size() < 2) {
            throw Error(ErrorKind::Configuration,
                        "disjoint-label split of '" + spec.concept_name + "' needs >= 2 labels per side, got " +
                            std::to_string(out.space_labels.size()) + " / " +
                            std::to_string(out.rest_labels.size()));
        }
        const double rest = f.probe_train + f.test;
        Allocator alloc({f.probe_train / rest, f.test / rest});
        for (Label label : out.space_labels) {
            out.space_train.insert(out.space_train.end(), groups[label].begin(), groups[label].end());
        }
        // remaining rows: stratified over the joint label tuple
        std::vector<std::size_t> rest_rows;
        for (Label label : out.rest_labels) {
            rest_rows.insert(rest_rows.end(), groups[label].begin(), groups[label].end());
        }
        std::sort(rest_rows.begin(), rest_rows.end());
        auto rest_groups = rows_by_joint_label(ds, rest_rows);
        for (std::size_t g = 0; g < rest_groups.size(); ++g) {
            auto& rows = rest_groups[g];
            Xoshiro256 rng(spec.seed, (std::uint64_t{1} << 32) + g);
            shuffle(std::span<std::size_t>(rows), rng);
            const auto counts = alloc.allocate(rows.size());
            const auto mid = rows.begin() + static_cast<std::ptrdiff_t>(counts[0]);
            out.probe_train.insert(out.probe_train.end(), rows.begin(), mid);
            out.test.insert(out.test.end(), mid, rows.end());
        }
    }

    for (auto* part : {&out.space_train, &out.probe_train, &out.test}) {
        std::sort(part->begin(), part->end());
    }
    const std::array<std::pair<const char*, std::size_t>, 3> sizes{{
        {"space-train", out.space_train.size()},
        {"probe-train", out.probe_train.size()},
        {"test", out.test.size()},
    }};
    for (const auto& [name, size] : sizes) {
        if (size == 0) {
            throw Error(ErrorKind::Configuration,
                        std::string("split fractions leave the ") + name + " split empty");
        }
    }
    return out;
}

SplitResult split(const LabeledDataset& ds, const SplitSpec& spec) {
    SplitIndices idx = split_indices(ds, spec);
    const std::string tag = std::string(" split=") + to_string(spec.mode) +
                            " seed=" + std::to_string(spec.seed) +
                            (spec.mode == SplitMode::DisjointLabel
                                 ? " concept=" + spec.concept_name + " rest-rows=stratified-joint-labels"
                                 : std::string{});
    const std::string base = ds.provenance();
    SplitResult out{ds.subset(idx.space_train, base + tag + " role=space-train"),
                    ds.subset(idx.probe_train, base + tag + " role=probe-train"),
                    ds.subset(idx.test, base + tag + " role=test"),
                    std::move(idx)};
    return out;
}

}  // namespace csl
