#include "csl/evaluation.hpp"

#include "csl/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

namespace csl {

using nlohmann::json;

namespace {

double round1(double x) { return std::round(x * 10.0) / 10.0; }

std::string fixed1(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", round1(x));
    return buf;
}

json parse_run_config(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Configuration, std::string("run config is not valid JSON: ") + e.what());
    }
}

json metrics_json(const Metrics& m) {
    return {{"retention", round1(m.retention)},
            {"leakage", round1(m.leakage)},
            {"purity", round1(m.purity)},
            {"interference", round1(m.interference)}};
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

json report_json(const MetricReport& r, const json& run_config) {
    json j;
    j["tool"] = "csl";
    j["version"] = version();
    j["run_config"] = run_config;
    j["concept"] = r.concept_name;
    j["other_concept"] = r.other_concept;
    j["estimator"] = to_string(r.estimator);
    j["dim"] = r.requested_dim ? json(*r.requested_dim) : json(nullptr);
    j["rank"] = r.rank;
    j["oblique"] = r.oblique;
    j["seeds"] = r.seeds;
    if (r.ok()) {
        j["metrics"] = metrics_json(r.metrics);
    } else {
        j["metrics"] = nullptr;
    }
    if (!r.per_seed.empty()) {
        json per = json::array();
        for (const auto& m : r.per_seed) {
            per.push_back(metrics_json(m));
        }
        j["per_seed"] = std::move(per);
    }
    j["bounds"] = {{"ambient_acc_Y", round1(r.bounds.ambient_acc)},
                   {"majority_Y", round1(r.bounds.majority)},
                   {"ambient_err_Yother", round1(r.bounds.ambient_err_other)},
                   {"majority_err_Yother", round1(r.bounds.majority_err_other)}};
    j["split_provenance"] = r.split_provenance;
    j["probe_config"] = {{"ridge", r.probe_config.ridge},
                         {"max_iter", r.probe_config.max_iter},
                         {"grad_tol", r.probe_config.grad_tol},
                         {"seed", r.probe_config.seed}};
    json probes = json::array();
    for (const auto& p : r.probes) {
        json pj = {{"role", p.role},
                   {"final_loss", p.final_loss},
                   {"grad_norm", p.grad_norm},
                   {"iterations", p.iterations},
                   {"stop", to_string(p.stop)}};
        if (p.weights) {
            pj["weights"] = matrix_json(*p.weights);
        }
        if (p.bias) {
            pj["bias"] = std::vector<double>(p.bias->data(), p.bias->data() + p.bias->size());
        }
        probes.push_back(std::move(pj));
    }
    j["probes"] = std::move(probes);
    j["flags"] = r.flags;
    if (r.error) {
        j["error"] = {{"kind", r.error_kind}, {"message", *r.error}};
    }
    return j;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) {
        return s;
    }
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') {
            out += '"';
        }
        out += c;
    }
    return out + '"';
}

std::string xml_escape(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace

std::string reports_to_json(const std::vector<MetricReport>& reports, const std::string& run_config_json) {
    const json cfg = parse_run_config(run_config_json);
    json arr = json::array();
    for (const auto& r : reports) {
        arr.push_back(report_json(r, cfg));
    }
    return arr.dump(2) + "\n";
}

std::string reports_to_csv(const std::vector<MetricReport>& reports, const std::string& run_config_json) {
    const json cfg = parse_run_config(run_config_json);
    std::ostringstream out;
    out << "# csl " << version() << " run_config=" << cfg.dump() << "\n";
    out << "concept,other_concept,estimator,dim,rank,seeds,retention,leakage,purity,interference,"
           "ambient_acc_Y,majority_Y,ambient_err_Yother,majority_err_Yother,flags,error\n";
    for (const auto& r : reports) {
        std::string seeds;
        for (std::size_t i = 0; i < r.seeds.size(); ++i) {
            seeds += (i ? ";" : "") + std::to_string(r.seeds[i]);
        }
        std::string flags;
        for (std::size_t i = 0; i < r.flags.size(); ++i) {
            flags += (i ? "; " : "") + r.flags[i];
        }
        out << csv_field(r.concept_name) << ',' << csv_field(r.other_concept) << ','
            << to_string(r.estimator) << ',' << (r.requested_dim ? std::to_string(*r.requested_dim) : "")
            << ',' << r.rank << ',' << seeds << ',';
        if (r.ok()) {
            out << fixed1(r.metrics.retention) << ',' << fixed1(r.metrics.leakage) << ','
                << fixed1(r.metrics.purity) << ',' << fixed1(r.metrics.interference) << ',';
        } else {
            out << ",,,,";
        }
        out << fixed1(r.bounds.ambient_acc) << ',' << fixed1(r.bounds.majority) << ','
            << fixed1(r.bounds.ambient_err_other) << ',' << fixed1(r.bounds.majority_err_other) << ','
            << csv_field(flags) << ',' << csv_field(r.error.value_or("")) << "\n";
    }
    return out.str();
}

std::string reports_to_svg(const std::vector<MetricReport>& reports, const std::string& run_config_json) {
    const json cfg = parse_run_config(run_config_json);

    // group by concept pair, keeping first-seen order
    std::vector<std::pair<std::string, std::string>> pairs;
    for (const auto& r : reports) {
        const auto key = std::make_pair(r.concept_name, r.other_concept);
        if (std::find(pairs.begin(), pairs.end(), key) == pairs.end()) {
            pairs.push_back(key);
        }
    }
    std::vector<EstimatorKind> kinds;
    for (const auto& r : reports) {
        if (std::find(kinds.begin(), kinds.end(), r.estimator) == kinds.end()) {
            kinds.push_back(r.estimator);
        }
    }

    static const char* const kColors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"};
    static const char* const kPanels[] = {"Retention", "Leakage", "Purity", "Interference"};
    constexpr double kPanelW = 220, kPanelH = 180, kPadL = 40, kPadT = 40, kGap = 30, kRowH = kPanelH + 70;
    const double width = kPadL + 4 * (kPanelW + kGap);
    const double height = kPadT + kRowH * static_cast<double>(std::max<std::size_t>(pairs.size(), 1)) + 30;

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    svg << "<metadata>" << xml_escape(json{{"tool", "csl"}, {"version", version()}, {"run_config", cfg}}.dump())
        << "</metadata>\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

    for (std::size_t row = 0; row < pairs.size(); ++row) {
        const auto& [concept_name, other] = pairs[row];
        std::vector<const MetricReport*> rs;
        for (const auto& r : reports) {
            if (r.concept_name == concept_name && r.other_concept == other) {
                rs.push_back(&r);
            }
        }
        // x categories: requested dims when sweeping, estimators otherwise
        std::vector<std::string> cats;
        auto category = [&](const MetricReport& r) {
            return r.requested_dim ? std::to_string(*r.requested_dim) : std::string(to_string(r.estimator));
        };
        for (const auto* r : rs) {
            const auto c = category(*r);
            if (std::find(cats.begin(), cats.end(), c) == cats.end()) {
                cats.push_back(c);
            }
        }
        const Bounds& b = rs.front()->bounds;
        const double lines[4][2] = {{b.ambient_acc, b.majority},
                                    {b.majority, b.ambient_acc},
                                    {b.majority_err_other, b.ambient_err_other},
                                    {b.ambient_err_other, b.majority_err_other}};
        const double top = kPadT + kRowH * static_cast<double>(row);
        svg << "<text x=\"" << kPadL << "\" y=\"" << top - 14 << "\" font-size=\"13\">"
            << xml_escape(concept_name) << " vs " << xml_escape(other) << "</text>\n";
        for (int p = 0; p < 4; ++p) {
            const double left = kPadL + p * (kPanelW + kGap);
            auto ypos = [&](double v) { return top + kPanelH * (1.0 - std::clamp(v, 0.0, 100.0) / 100.0); };
            auto xpos = [&](std::size_t i) {
                return left + kPanelW * (static_cast<double>(i) + 0.5) / static_cast<double>(cats.size());
            };
            svg << "<g>\n<text x=\"" << left + kPanelW / 2 << "\" y=\"" << top - 2
                << "\" text-anchor=\"middle\">" << kPanels[p] << "</text>\n";
            svg << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << kPanelW << "\" height=\""
                << kPanelH << "\" fill=\"none\" stroke=\"#444\"/>\n";
            for (int t = 0; t <= 100; t += 25) {
                svg << "<text x=\"" << left - 4 << "\" y=\"" << ypos(t) + 4 << "\" text-anchor=\"end\">" << t
                    << "</text>\n";
            }
            svg << "<line x1=\"" << left << "\" x2=\"" << left + kPanelW << "\" y1=\"" << ypos(lines[p][0])
                << "\" y2=\"" << ypos(lines[p][0]) << "\" stroke=\"#2a2\" stroke-dasharray=\"5,3\"/>\n";
            svg << "<line x1=\"" << left << "\" x2=\"" << left + kPanelW << "\" y1=\"" << ypos(lines[p][1])
                << "\" y2=\"" << ypos(lines[p][1]) << "\" stroke=\"#a22\" stroke-dasharray=\"5,3\"/>\n";
            for (std::size_t i = 0; i < cats.size(); ++i) {
                svg << "<text x=\"" << xpos(i) << "\" y=\"" << top + kPanelH + 14
                    << "\" text-anchor=\"middle\">" << xml_escape(cats[i]) << "</text>\n";
            }
            for (const auto* r : rs) {
                if (!r->ok()) {
                    continue;
                }
                const double v[4] = {r->metrics.retention, r->metrics.leakage, r->metrics.purity,
                                     r->metrics.interference};
                const auto ci = static_cast<std::size_t>(
                    std::find(cats.begin(), cats.end(), category(*r)) - cats.begin());
                const auto ki = static_cast<std::size_t>(
                    std::find(kinds.begin(), kinds.end(), r->estimator) - kinds.begin());
                svg << "<circle cx=\"" << xpos(ci) << "\" cy=\"" << ypos(v[p]) << "\" r=\"4\" fill=\""
                    << kColors[ki % 6] << "\"><title>" << to_string(r->estimator) << " " << fixed1(v[p])
                    << "</title></circle>\n";
            }
            svg << "</g>\n";
        }
    }
    // legend
    const double ly = height - 14;
    double lx = kPadL;
    for (std::size_t k = 0; k < kinds.size(); ++k) {
        svg << "<circle cx=\"" << lx << "\" cy=\"" << ly - 4 << "\" r=\"4\" fill=\"" << kColors[k % 6]
            << "\"/><text x=\"" << lx + 8 << "\" y=\"" << ly << "\">" << to_string(kinds[k]) << "</text>\n";
        lx += 70;
    }
    svg << "<line x1=\"" << lx << "\" x2=\"" << lx + 20 << "\" y1=\"" << ly - 4 << "\" y2=\"" << ly - 4
        << "\" stroke=\"#2a2\" stroke-dasharray=\"5,3\"/><text x=\"" << lx + 24 << "\" y=\"" << ly
        << "\">best</text>\n";
    lx += 70;
    svg << "<line x1=\"" << lx << "\" x2=\"" << lx + 20 << "\" y1=\"" << ly - 4 << "\" y2=\"" << ly - 4
        << "\" stroke=\"#a22\" stroke-dasharray=\"5,3\"/><text x=\"" << lx + 24 << "\" y=\"" << ly
        << "\">worst</text>\n";
    svg << "</svg>\n";
    return svg.str();
}

}  // namespace csl
