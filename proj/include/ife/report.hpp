#pragma once

#include "ife/simulation.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace ife {

enum class CellKind { Estimators, Tests, Fraction };

std::string to_string(CellKind k);
CellKind parse_cell_kind(const std::string& s);

struct TableCell {
    std::string label;
    CellKind kind = CellKind::Estimators;
    McConfig config;
    /// Bandwidth grid for fraction cells.
    std::vector<int> bandwidths;
};

struct StudyPreset {
    std::string table;
    std::uint64_t seed = 0;
    double scale = 1.0;
    int paper_reps = 10000;
    std::vector<TableCell> cells;
};

/// Presets for the tables 1, 2, 3, 6, 7, 8, S1, S2, S3. Replications are
/// round(10000 * scale); each cell gets its own seed derived from `seed`.
StudyPreset table_preset(const std::string& table, double scale, std::uint64_t seed);

struct CellResult {
    TableCell cell;
    McSummary summary;
    std::vector<FractionRow> fractions;
};

struct StudyResult {
    std::string table;
    std::uint64_t seed = 0;
    double scale = 1.0;
    std::vector<CellResult> cells;
};

StudyResult run_study(const StudyPreset& preset, int threads);

/// Flat CSV: one row per cell and estimator, test, or bandwidth.
std::string study_to_csv(const StudyResult& r);
StudyResult study_from_csv(const std::string& text);

/// Structured record following the table layout (cells with nested results).
nlohmann::ordered_json study_to_json(const StudyResult& r);
StudyResult study_from_json(const nlohmann::ordered_json& j);

/// Human-readable table: estimators as columns, bias/std/rmse as row triples.
std::string study_to_text(const StudyResult& r);

}  // namespace ife
