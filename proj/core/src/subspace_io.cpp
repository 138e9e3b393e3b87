#include "csl/subspace.hpp"

#include "byte_io.hpp"
#include "file_io.hpp"

#include <json.hpp>

namespace csl {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'C', 'S', 'U', 'B'};
constexpr std::uint16_t kVersion = 1;

}  // namespace

std::string encode_subspace(const ConceptSubspace& s) {
    json header;
    header["estimator"] = to_string(s.estimator);
    header["concept"] = s.concept_name;
    header["dim"] = s.dim();
    header["rank"] = s.rank();
    header["oblique"] = s.projector.oblique();
    header["seed"] = s.seed ? json(*s.seed) : json(nullptr);
    header["requested_dim"] = s.requested_dim ? json(*s.requested_dim) : json(nullptr);
    header["provenance"] = s.provenance;
    header["fit_stats"] = {{"scalars", s.fit_stats.scalars},
                           {"singular_values", s.fit_stats.singular_values},
                           {"notes", s.fit_stats.notes}};
    const std::string text = header.dump();

    std::string out(kMagic, sizeof(kMagic));
    detail::put_u16(out, kVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(text.size()));
    out += text;
    const Matrix& p = s.projector.onto();
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        for (Eigen::Index j = 0; j < p.cols(); ++j) {
            detail::put_f64(out, p(i, j));
        }
    }
    return out;
}

ConceptSubspace decode_subspace(const std::string& bytes) {
    detail::Reader in(bytes);
    if (in.take(4, "magic") != std::string_view(kMagic, 4)) {
        throw FormatError(0, "bad magic, expected \"CSUB\"");
    }
    const std::uint64_t version_at = in.offset();
    if (const auto v = in.u16("version"); v != kVersion) {
        throw FormatError(version_at, "unsupported subspace version " + std::to_string(v));
    }
    const std::uint32_t len = in.u32("header length");
    const std::uint64_t header_at = in.offset();
    const auto text = in.take(len, "JSON header");

    ConceptSubspace s;
    Eigen::Index dim = 0;
    Eigen::Index rank = 0;
    bool oblique = false;
    try {
        const json header = json::parse(text);
        s.estimator = parse_estimator(header.at("estimator").get<std::string>());
        s.concept_name = header.at("concept").get<std::string>();
        dim = header.at("dim").get<Eigen::Index>();
        rank = header.at("rank").get<Eigen::Index>();
        oblique = header.at("oblique").get<bool>();
        if (header.contains("seed") && !header["seed"].is_null()) {
            s.seed = header["seed"].get<std::uint64_t>();
        }
        if (header.contains("requested_dim") && !header["requested_dim"].is_null()) {
            s.requested_dim = header["requested_dim"].get<Eigen::Index>();
        }
        if (header.contains("provenance")) {
            s.provenance = header["provenance"].get<std::string>();
        }
        if (header.contains("fit_stats")) {
            const auto& fs = header["fit_stats"];
            s.fit_stats.scalars = fs.value("scalars", std::map<std::string, double>{});
            s.fit_stats.singular_values = fs.value("singular_values", std::vector<double>{});
            s.fit_stats.notes = fs.value("notes", std::vector<std::string>{});
        }
    } catch (const json::parse_error& e) {
        throw FormatError(header_at + (e.byte > 0 ? e.byte - 1 : 0),
                          std::string("malformed JSON header: ") + e.what());
    } catch (const json::exception& e) {
        throw FormatError(header_at, std::string("invalid JSON header: ") + e.what());
    }
    if (dim < 1 || rank < 0 || rank > dim) {
        throw FormatError(header_at, "header has inconsistent dim/rank");
    }
    const auto count = static_cast<std::uint64_t>(dim) * static_cast<std::uint64_t>(dim);
    in.need(count * 8, "projector payload");
    Matrix p(dim, dim);
    for (Eigen::Index i = 0; i < dim; ++i) {
        for (Eigen::Index j = 0; j < dim; ++j) {
            p(i, j) = in.f64("projector payload");
        }
    }
    if (in.remaining() != 0) {
        throw FormatError(in.offset(), "trailing bytes after projector payload");
    }
    if (!p.allFinite()) {
        throw FormatError(in.offset(), "projector contains non-finite entries");
    }
    s.projector = Projector::restore(std::move(p), oblique);
    if (s.projector.rank() != rank) {
        throw FormatError(header_at, "projector rank " + std::to_string(s.projector.rank()) +
                                         " disagrees with header rank " + std::to_string(rank));
    }
    return s;
}

void save_subspace(const ConceptSubspace& s, const std::filesystem::path& path) {
    detail::write_file(path, encode_subspace(s));
}

ConceptSubspace load_subspace(const std::filesystem::path& path) {
    return decode_subspace(detail::read_file(path));
}

}  // namespace csl
