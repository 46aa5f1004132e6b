#pragma once

// File formats:
//   hierarchy:   recursive JSON objects {"name": str, "children": [...]}
//   probs:       CSV, header row = class names, one data row per instance;
//                columns are matched to hierarchy leaves by name
//   labels:      one class name per line
//   predictions: one JSON object per line {classes, nodes, size, repr_complexity}
//   reports:     CSV plus a JSON mirror

#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hcp/conformal.hpp"
#include "hcp/errors.hpp"
#include "hcp/eval.hpp"
#include "hcp/hierarchy.hpp"

namespace hcp {
namespace io {

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("cannot write '" + path + "'");
    out << content;
}

inline Hierarchy read_hierarchy(const std::string& path,
                                std::vector<std::string>* warnings = nullptr) {
    return parse_hierarchy(read_file(path), warnings);
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) {
        // trim surrounding whitespace
        const auto b = field.find_first_not_of(" \t\r");
        const auto e = field.find_last_not_of(" \t\r");
        fields.push_back(b == std::string::npos ? std::string()
                                                : field.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

inline std::string format_double(double x) {
    std::ostringstream ss;
    ss << std::setprecision(17) << x;
    return ss.str();
}

}  // namespace detail

// Reads a probability matrix and reorders columns to class-id order by
// matching header names against hierarchy leaf names.
inline std::vector<std::vector<double>> read_probability_csv(const std::string& path,
                                                             const Hierarchy& h) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw data_error("'" + path + "': empty probability file");

    const std::vector<std::string> header = detail::split_csv_line(line);
    if (static_cast<int>(header.size()) != h.num_classes())
        throw data_error("'" + path + "': header has " + std::to_string(header.size()) +
                         " columns, hierarchy has " + std::to_string(h.num_classes()) +
                         " classes");
    std::vector<int> column_class(header.size());
    std::vector<char> seen(static_cast<std::size_t>(h.num_classes()), 0);
    for (std::size_t i = 0; i < header.size(); ++i) {
        const int c = h.class_id(header[i]);  // throws on unknown names
        if (seen[static_cast<std::size_t>(c)])
            throw data_error("'" + path + "': duplicate column '" + header[i] + "'");
        seen[static_cast<std::size_t>(c)] = 1;
        column_class[i] = c;
    }

    std::vector<std::vector<double>> rows;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const std::vector<std::string> fields = detail::split_csv_line(line);
        if (fields.size() != header.size())
            throw data_error("'" + path + "' line " + std::to_string(line_no) + ": expected " +
                             std::to_string(header.size()) + " fields, got " +
                             std::to_string(fields.size()));
        std::vector<double> row(header.size(), 0.0);
        for (std::size_t i = 0; i < fields.size(); ++i) {
            try {
                std::size_t pos = 0;
                row[static_cast<std::size_t>(column_class[i])] = std::stod(fields[i], &pos);
                if (pos != fields[i].size()) throw std::invalid_argument(fields[i]);
            } catch (...) {
                throw data_error("'" + path + "' line " + std::to_string(line_no) +
                                 ": bad number '" + fields[i] + "'");
            }
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw data_error("'" + path + "': no data rows");
    return rows;
}

inline void write_probability_csv(const std::string& path, const Hierarchy& h,
                                  const std::vector<std::vector<double>>& rows) {
    std::ostringstream out;
    for (int c = 0; c < h.num_classes(); ++c) out << (c ? "," : "") << h.class_name(c);
    out << "\n";
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i)
            out << (i ? "," : "") << detail::format_double(row[i]);
        out << "\n";
    }
    write_file(path, out.str());
}

inline std::vector<int> read_labels(const std::string& path, const Hierarchy& h) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open '" + path + "'");
    std::vector<int> labels;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        try {
            labels.push_back(h.class_id(line));
        } catch (const data_error&) {
            throw data_error("'" + path + "' line " + std::to_string(line_no) + ": label '" +
                             line + "' is not a hierarchy leaf");
        }
    }
    if (labels.empty()) throw data_error("'" + path + "': no labels");
    return labels;
}

inline void write_labels(const std::string& path, const Hierarchy& h,
                         const std::vector<int>& labels) {
    std::ostringstream out;
    for (int c : labels) out << h.class_name(c) << "\n";
    write_file(path, out.str());
}

inline nlohmann::json hierarchy_to_json(const Hierarchy& h, int v = Hierarchy::root()) {
    nlohmann::json j;
    j["name"] = h.node_name(v);
    if (!h.is_leaf(v)) {
        j["children"] = nlohmann::json::array();
        for (int c : h.node(v).children) j["children"].push_back(hierarchy_to_json(h, c));
    }
    return j;
}

inline void write_hierarchy(const std::string& path, const Hierarchy& h) {
    write_file(path, hierarchy_to_json(h).dump(2) + "\n");
}

// One prediction per line: {"classes": [names], "nodes": [names], "size": n,
// "repr_complexity": n}.
inline std::string prediction_to_json_line(const Hierarchy& h, const Prediction& p) {
    nlohmann::json j;
    j["classes"] = nlohmann::json::array();
    for (int c : p.classes) j["classes"].push_back(h.class_name(c));
    j["nodes"] = nlohmann::json::array();
    for (int v : p.cover) j["nodes"].push_back(h.node_name(v));
    j["size"] = p.size;
    j["repr_complexity"] = p.repr_complexity;
    return j.dump();
}

inline void write_predictions(const std::string& path, const Hierarchy& h,
                              const std::vector<Prediction>& predictions) {
    std::ostringstream out;
    for (const Prediction& p : predictions) out << prediction_to_json_line(h, p) << "\n";
    write_file(path, out.str());
}

// Reads predictions back for evaluation; covers and complexities are
// recomputed from the hierarchy rather than trusted from the file.
inline std::vector<Prediction> read_predictions(const std::string& path, const Hierarchy& h) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open '" + path + "'");
    std::vector<Prediction> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
            Prediction p;
            for (const auto& name : j.at("classes"))
                p.classes.push_back(h.class_id(name.get<std::string>()));
            std::sort(p.classes.begin(), p.classes.end());
            p.cover = minimal_cover(h, p.classes);
            p.size = static_cast<int>(p.classes.size());
            p.repr_complexity = static_cast<int>(p.cover.size());
            out.push_back(std::move(p));
        } catch (const nlohmann::json::exception& e) {
            throw data_error("'" + path + "' line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (out.empty()) throw data_error("'" + path + "': no predictions");
    return out;
}

inline void write_predictor(const std::string& path, const CalibratedPredictor& predictor,
                            const Hierarchy& h) {
    write_file(path, predictor_to_json(predictor, h.num_classes()).dump(2) + "\n");
}

inline CalibratedPredictor read_predictor(const std::string& path, const Hierarchy& h) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw data_error("'" + path + "': " + e.what());
    }
    return predictor_from_json(j, &h);
}

// Report CSV: one row per method with means and standard deviations.
inline std::string report_to_csv(const MetricReport& report) {
    std::ostringstream out;
    out << "method,coverage,coverage_sd,size,size_sd,repr_complexity,repr_complexity_sd\n";
    for (const MethodStats& m : report.methods) {
        out << m.method << ',' << detail::format_double(m.coverage) << ','
            << detail::format_double(m.coverage_sd) << ',' << detail::format_double(m.size) << ','
            << detail::format_double(m.size_sd) << ',' << detail::format_double(m.repr_complexity)
            << ',' << detail::format_double(m.repr_complexity_sd) << "\n";
    }
    return out.str();
}

inline nlohmann::json report_to_json(const MetricReport& report) {
    nlohmann::json j;
    j["resamples"] = report.resamples;
    j["alpha"] = report.alpha;
    j["methods"] = nlohmann::json::array();
    for (const MethodStats& m : report.methods) {
        nlohmann::json mj;
        mj["method"] = m.method;
        mj["coverage"] = m.coverage;
        mj["coverage_sd"] = m.coverage_sd;
        mj["size"] = m.size;
        mj["size_sd"] = m.size_sd;
        mj["repr_complexity"] = m.repr_complexity;
        mj["repr_complexity_sd"] = m.repr_complexity_sd;
        mj["bound_violations"] = m.bound_violations;
        j["methods"].push_back(mj);
    }
    return j;
}

inline void write_report(const std::string& csv_path, const MetricReport& report) {
    write_file(csv_path, report_to_csv(report));
    std::string json_path = csv_path;
    const auto dot = json_path.rfind('.');
    if (dot != std::string::npos && json_path.substr(dot) == ".csv")
        json_path = json_path.substr(0, dot);
    json_path += ".json";
    write_file(json_path, report_to_json(report).dump(2) + "\n");
}

}  // namespace io
}  // namespace hcp
