#pragma once

#include <Eigen/Dense>
#include <string>

#include "thinlab/model_eval.hpp"
#include "thinlab/simulations.hpp"

namespace thinlab::io {

enum class ValueKind { real, count };

/// Dense CSV matrix, optional single header row.  count mode rejects
/// fractional or negative cells; errors carry the 1-based row/column.
Eigen::MatrixXd read_matrix(const std::string& path, ValueKind kind);

/// %.17g cells: doubles round-trip exactly and integral values print bare.
void write_matrix(const Eigen::MatrixXd& m, const std::string& path);

/// FNV-1a hash of the file bytes, hex-encoded; manifest provenance.
std::string file_checksum(const std::string& path);

/// Columns: K, loss_fold_1..M, mean_loss.
void write_loss_curve_csv(const eval::LossCurve& curve, const std::string& path);

std::string sim_report_to_json(const sim::SimReport& report);
sim::SimReport sim_report_from_json(const std::string& text);

/// Rejects non-finite values before writing.
void write_sim_report_json(const sim::SimReport& report, const std::string& path);

/// Figure-ready CSVs: <prefix>.curves.csv (rescaled mean curve per method)
/// and <prefix>.histogram.csv (selection counts per method).
void write_sim_report_csvs(const sim::SimReport& report, const std::string& prefix);

void write_text(const std::string& path, const std::string& text);

}  // namespace thinlab::io
