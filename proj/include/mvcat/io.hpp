#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mvcat/likelihood.hpp"
#include "mvcat/odds_design.hpp"
#include "mvcat/solver.hpp"

namespace mvcat {

/// Header plus string cells, as read from a comma-separated file.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

CsvTable read_csv(std::istream& in, const std::string& source = "input");
CsvTable read_csv_file(const std::string& path);

/// All cells as finite reals; errors name the source, row and column.
Eigen::MatrixXd numeric_matrix(const CsvTable& table, const std::string& source = "input");

/// Response cells as 0-based categories (file holds 1..K or NA).
Eigen::MatrixXi response_matrix(const CsvTable& table, const CategoryLayout& layout,
                                const std::string& source = "input");

/// Predictors and responses from two CSV files with header rows.
Dataset load_dataset(const std::string& x_path, const std::string& y_path, const CategoryLayout& layout);

inline constexpr int kModelFormatVersion = 1;

struct Model {
    CategoryLayout layout{std::vector<int>{2, 2}};
    Eigen::MatrixXd beta;  // standardized scale, row 0 intercept
    Standardization standardization;
    std::vector<std::string> predictor_names;
    double lambda = 0.0;
    double gamma = 0.0;
    LossKind objective = LossKind::Full;
    Penalty penalty = Penalty::LogOddsGroup;
    int iterations = 0;
    bool converged = false;
    Partition partition;
};

Model make_model(const Dataset& data, const FitResult& fit, const FitConfig& config);

void save_model(const Model& model, const std::string& path);
std::string model_to_json(const Model& model);
Model load_model(const std::string& path);
Model model_from_json(const std::string& text);

/// Columns: joint_class, y1..yG (1-based), then one probability per joint class.
void write_predictions_csv(std::ostream& out, const ProbabilityMatrix& probabilities, const CategoryLayout& layout);

/// T rows, one column per contrast, headed by the contrast labels.
void write_design_csv(std::ostream& out, const OddsDesign& design);

}  // namespace mvcat
