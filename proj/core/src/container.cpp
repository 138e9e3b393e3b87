#include "csl/dataset.hpp"

#include "byte_io.hpp"
#include "file_io.hpp"

#include <json.hpp>

#include <cmath>

namespace csl {

using nlohmann::json;

std::string encode_container(const LabeledDataset& ds) {
    json header;
    header["n"] = ds.rows();
    header["d"] = ds.dim();
    header["provenance"] = ds.provenance();
    header["concepts"] = json::array();
    for (const auto& c : ds.concepts()) {
        header["concepts"].push_back(
            {{"name", c.name}, {"num_classes", c.num_classes()}, {"class_names", c.class_names}});
    }
    const std::string text = header.dump();

    std::string out(kContainerMagic, sizeof(kContainerMagic));
    detail::put_u16(out, kContainerVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(text.size()));
    out += text;
    out.reserve(out.size() + static_cast<std::size_t>(ds.rows() * ds.dim()) * 4 +
                ds.concepts().size() * static_cast<std::size_t>(ds.rows()) * 4);
    for (Eigen::Index i = 0; i < ds.rows(); ++i) {
        for (Eigen::Index j = 0; j < ds.dim(); ++j) {
            detail::put_f32(out, static_cast<float>(ds.features()(i, j)));
        }
    }
    for (const auto& c : ds.concepts()) {
        for (Label label : c.labels) {
            detail::put_u32(out, label);
        }
    }
    return out;
}

LabeledDataset decode_container(const std::string& bytes) {
    detail::Reader in(bytes);
    const auto magic = in.take(4, "magic");
    if (magic != std::string_view(kContainerMagic, 4)) {
        throw FormatError(0, "bad magic, expected \"CSLD\"");
    }
    const std::uint64_t version_at = in.offset();
    const std::uint16_t version = in.u16("version");
    if (version != kContainerVersion) {
        throw FormatError(version_at, "unsupported container version " + std::to_string(version));
    }
    const std::uint32_t header_len = in.u32("header length");
    const std::uint64_t header_at = in.offset();
    const auto header_text = in.take(header_len, "JSON header");

    json header;
    std::int64_t n = 0;
    std::int64_t d = 0;
    std::vector<Concept> concepts;
    std::string provenance;
    try {
        header = json::parse(header_text);
        n = header.at("n").get<std::int64_t>();
        d = header.at("d").get<std::int64_t>();
        if (header.contains("provenance")) {
            provenance = header.at("provenance").get<std::string>();
        }
        for (const auto& c : header.at("concepts")) {
            Concept entry;
            entry.name = c.at("name").get<std::string>();
            entry.class_names = c.at("class_names").get<std::vector<std::string>>();
            const auto count = c.at("num_classes").get<std::size_t>();
            if (count != entry.class_names.size()) {
                throw FormatError(header_at, "concept '" + entry.name + "' declares " +
                                                 std::to_string(count) + " classes but names " +
                                                 std::to_string(entry.class_names.size()));
            }
            concepts.push_back(std::move(entry));
        }
    } catch (const json::parse_error& e) {
        throw FormatError(header_at + (e.byte > 0 ? e.byte - 1 : 0),
                          std::string("malformed JSON header: ") + e.what());
    } catch (const json::exception& e) {
        throw FormatError(header_at, std::string("invalid JSON header: ") + e.what());
    }
    if (n < 1 || d < 1) {
        throw FormatError(header_at, "header needs n >= 1 and d >= 1");
    }

    const auto rows = static_cast<std::uint64_t>(n);
    const auto cols = static_cast<std::uint64_t>(d);
    in.need(rows * cols * 4, "feature payload");
    Matrix features(n, d);
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t j = 0; j < d; ++j) {
            const std::uint64_t at = in.offset();
            const float value = in.f32("feature payload");
            if (!std::isfinite(value)) {
                throw FormatError(at, "non-finite feature value");
            }
            features(i, j) = static_cast<double>(value);
        }
    }
    for (auto& entry : concepts) {
        in.need(rows * 4, "label payload");
        entry.labels.resize(rows);
        for (std::uint64_t i = 0; i < rows; ++i) {
            const std::uint64_t at = in.offset();
            const std::uint32_t label = in.u32("label payload");
            if (label >= entry.num_classes()) {
                throw FormatError(at, "concept '" + entry.name + "' row " + std::to_string(i) +
                                          ": label " + std::to_string(label) + " out of range");
            }
            entry.labels[i] = label;
        }
    }
    if (in.remaining() != 0) {
        throw FormatError(in.offset(), "trailing bytes after label payload");
    }
    return LabeledDataset(std::move(features), std::move(concepts), std::move(provenance));
}

void save(const LabeledDataset& ds, const std::filesystem::path& path) {
    detail::write_file(path, encode_container(ds));
}

LabeledDataset load(const std::filesystem::path& path) {
    return decode_container(detail::read_file(path));
}

}  // namespace csl
