#include "thinlab/matrix_io.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <vector>

#include "thinlab/errors.hpp"

namespace thinlab::io {

namespace {

std::string format_value(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

bool parse_double(const std::string& text, double* out) {
    const char* begin = text.c_str();
    char* end = nullptr;
    *out = std::strtod(begin, &end);
    if (end == begin) return false;
    while (*end == ' ' || *end == '\t' || *end == '\r') ++end;
    return *end == '\0';
}

void check_finite(double v, const char* what) {
    if (!std::isfinite(v))
        throw IoError(std::string("report contains a non-finite ") + what);
}

}  // namespace

Eigen::MatrixXd read_matrix(const std::string& path, ValueKind kind) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);

    std::vector<std::vector<double>> rows;
    std::string line;
    int line_number = 0;
    bool maybe_header = true;
    while (std::getline(in, line)) {
        ++line_number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::vector<std::string> cells = split_csv_line(line);
        std::vector<double> row(cells.size());
        bool numeric = true;
        for (std::size_t c = 0; c < cells.size(); ++c) {
            if (!parse_double(cells[c], &row[c])) {
                if (maybe_header) {
                    numeric = false;
                    break;
                }
                std::ostringstream msg;
                msg << path << ": non-numeric cell at row " << line_number << ", column "
                    << c + 1;
                throw IoError(msg.str());
            }
        }
        maybe_header = false;
        if (!numeric) continue;  // single header row skipped
        if (!rows.empty() && row.size() != rows.front().size()) {
            std::ostringstream msg;
            msg << path << ": ragged row at row " << line_number << " (" << row.size()
                << " cells, expected " << rows.front().size() << ")";
            throw IoError(msg.str());
        }
        if (kind == ValueKind::count) {
            for (std::size_t c = 0; c < row.size(); ++c) {
                if (row[c] != std::floor(row[c]) || row[c] < 0.0) {
                    std::ostringstream msg;
                    msg << path << ": expected a non-negative integer at row " << line_number
                        << ", column " << c + 1 << " but found " << cells[c];
                    throw IoError(msg.str());
                }
            }
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw IoError(path + ": no data rows");

    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return m;
}

void write_matrix(const Eigen::MatrixXd& m, const std::string& path) {
    std::ostringstream out;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j > 0) out << ',';
            out << format_value(m(i, j));
        }
        out << '\n';
    }
    write_text(path, out.str());
}

std::string file_checksum(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    char c;
    while (in.get(c)) {
        hash ^= static_cast<unsigned char>(c);
        hash *= 0x100000001b3ULL;
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
    return std::string("fnv1a64:") + buf;
}

void write_loss_curve_csv(const eval::LossCurve& curve, const std::string& path) {
    std::ostringstream out;
    out << "K";
    for (Eigen::Index m = 0; m < curve.per_fold_loss.rows(); ++m)
        out << ",loss_fold_" << m + 1;
    out << ",mean_loss\n";
    for (std::size_t c = 0; c < curve.candidate_ks.size(); ++c) {
        out << curve.candidate_ks[c];
        for (Eigen::Index m = 0; m < curve.per_fold_loss.rows(); ++m)
            out << ',' << format_value(curve.per_fold_loss(m, static_cast<Eigen::Index>(c)));
        out << ',' << format_value(curve.mean_loss[static_cast<Eigen::Index>(c)]) << '\n';
    }
    write_text(path, out.str());
}

namespace {

nlohmann::json method_to_json(const sim::MethodSummary& m) {
    check_finite(m.detection, "detection");
    check_finite(m.power, "power");
    check_finite(m.proportion_correct, "proportion_correct");
    check_finite(m.monotone_fraction, "monotone_fraction");
    nlohmann::json j;
    j["method"] = m.method;
    j["loss"] = m.loss;
    j["detection"] = m.detection;
    j["power"] = m.power;
    j["proportion_correct"] = m.proportion_correct;
    j["monotone_fraction"] = m.monotone_fraction;
    j["flagged"] = m.flagged;
    j["candidate_ks"] = m.candidate_ks;
    nlohmann::json hist = nlohmann::json::object();
    for (const auto& [k, count] : m.histogram) hist[std::to_string(k)] = count;
    j["histogram"] = hist;
    std::vector<double> curve(m.mean_curve.data(), m.mean_curve.data() + m.mean_curve.size());
    for (double v : curve) check_finite(v, "mean_curve value");
    j["mean_curve"] = curve;
    return j;
}

sim::MethodSummary method_from_json(const nlohmann::json& j) {
    sim::MethodSummary m;
    m.method = j.at("method").get<std::string>();
    m.loss = j.at("loss").get<std::string>();
    m.detection = j.at("detection").get<double>();
    m.power = j.at("power").get<double>();
    m.proportion_correct = j.at("proportion_correct").get<double>();
    m.monotone_fraction = j.at("monotone_fraction").get<double>();
    m.flagged = j.at("flagged").get<int>();
    m.candidate_ks = j.at("candidate_ks").get<std::vector<int>>();
    for (const auto& [key, value] : j.at("histogram").items())
        m.histogram[std::stoi(key)] = value.get<int>();
    const auto curve = j.at("mean_curve").get<std::vector<double>>();
    m.mean_curve = Eigen::Map<const Eigen::VectorXd>(curve.data(),
                                                     static_cast<Eigen::Index>(curve.size()));
    return m;
}

}  // namespace

std::string sim_report_to_json(const sim::SimReport& report) {
    nlohmann::json j;
    j["experiment"] = report.experiment;
    j["n_reps"] = report.n_reps;
    j["seed"] = report.seed;
    j["methods"] = nlohmann::json::array();
    for (const auto& m : report.methods) j["methods"].push_back(method_to_json(m));
    return j.dump(2) + "\n";
}

sim::SimReport sim_report_from_json(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    sim::SimReport report;
    report.experiment = j.at("experiment").get<std::string>();
    report.n_reps = j.at("n_reps").get<int>();
    report.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& m : j.at("methods")) report.methods.push_back(method_from_json(m));
    return report;
}

void write_sim_report_json(const sim::SimReport& report, const std::string& path) {
    write_text(path, sim_report_to_json(report));
}

void write_sim_report_csvs(const sim::SimReport& report, const std::string& prefix) {
    // Curves: one column per method/loss pair, aligned on candidate K.
    std::size_t longest = 0;
    for (const auto& m : report.methods) longest = std::max(longest, m.candidate_ks.size());
    if (longest > 0) {
        std::ostringstream out;
        out << "K";
        for (const auto& m : report.methods) out << ',' << m.method << '_' << m.loss;
        out << '\n';
        const auto& ks = report.methods.front().candidate_ks;
        for (std::size_t row = 0; row < longest; ++row) {
            out << (row < ks.size() ? std::to_string(ks[row]) : std::string());
            for (const auto& m : report.methods) {
                out << ',';
                if (row < static_cast<std::size_t>(m.mean_curve.size()))
                    out << format_value(m.mean_curve[static_cast<Eigen::Index>(row)]);
            }
            out << '\n';
        }
        write_text(prefix + ".curves.csv", out.str());
    }

    std::ostringstream hist;
    hist << "method,loss,K,count\n";
    for (const auto& m : report.methods)
        for (const auto& [k, count] : m.histogram)
            hist << m.method << ',' << m.loss << ',' << k << ',' << count << '\n';
    write_text(prefix + ".histogram.csv", hist.str());
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << text;
    if (!out) throw IoError("write failed for " + path);
}

}  // namespace thinlab::io
