#include "mvcat/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "mvcat/error.hpp"

namespace mvcat {

namespace {

using nlohmann::json;

std::string trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
    s = s.substr(b, e - b);
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
    return std::string(s);
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (;;) {
        const std::size_t comma = line.find(',', start);
        cells.push_back(trim(std::string_view(line).substr(start, comma - start)));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return cells;
}

std::string where(const std::string& source, std::size_t row, std::size_t col, const CsvTable& t) {
    std::string s = source + " row " + std::to_string(row + 1) + ", column " + std::to_string(col + 1);
    if (col < t.header.size() && !t.header[col].empty()) s += " ('" + t.header[col] + "')";
    return s;
}

bool parse_double(const std::string& cell, double& value) {
    const char* first = cell.data();
    const char* last = first + cell.size();
    if (first != last && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, value);
    return ec == std::errc() && ptr == last && first != last;
}

std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");
    return in;
}

std::string objective_name(LossKind k) { return k == LossKind::Full ? "full" : "observed"; }
std::string penalty_name(Penalty p) { return p == Penalty::LogOddsGroup ? "log-odds-group" : "entrywise-l1"; }

std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd to_eigen(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

CsvTable read_csv(std::istream& in, const std::string& source) {
    CsvTable t;
    std::string line;
    bool have_header = false;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto cells = split_line(line);
        if (!have_header) {
            t.header = std::move(cells);
            have_header = true;
            continue;
        }
        if (cells.size() != t.header.size()) {
            throw DataError(source + " line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                            " fields, header has " + std::to_string(t.header.size()));
        }
        t.rows.push_back(std::move(cells));
    }
    if (!have_header) throw DataError(source + " is empty");
    return t;
}

CsvTable read_csv_file(const std::string& path) {
    auto in = open_input(path);
    return read_csv(in, path);
}

Eigen::MatrixXd numeric_matrix(const CsvTable& table, const std::string& source) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(table.rows.size()), static_cast<Eigen::Index>(table.header.size()));
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        for (std::size_t j = 0; j < table.header.size(); ++j) {
            double v = 0.0;
            if (!parse_double(table.rows[i][j], v) || !std::isfinite(v)) {
                throw DataError("malformed number '" + table.rows[i][j] + "' at " + where(source, i, j, table));
            }
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
        }
    }
    return m;
}

Eigen::MatrixXi response_matrix(const CsvTable& table, const CategoryLayout& layout, const std::string& source) {
    if (table.header.size() != static_cast<std::size_t>(layout.responses())) {
        throw DataError(source + " has " + std::to_string(table.header.size()) + " columns but the layout has " +
                        std::to_string(layout.responses()) + " responses");
    }
    Eigen::MatrixXi m(static_cast<Eigen::Index>(table.rows.size()), layout.responses());
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        for (std::size_t r = 0; r < table.header.size(); ++r) {
            const std::string& cell = table.rows[i][r];
            int& out = m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(r));
            if (cell == "NA" || cell.empty()) {
                out = kMissing;
                continue;
            }
            int v = 0;
            const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (ec != std::errc() || ptr != cell.data() + cell.size()) {
                throw DataError("malformed category '" + cell + "' at " + where(source, i, r, table));
            }
            if (v < 1 || v > layout.categories(static_cast<int>(r))) {
                throw DataError("category " + cell + " outside 1.." +
                                std::to_string(layout.categories(static_cast<int>(r))) + " at " +
                                where(source, i, r, table));
            }
            out = v - 1;
        }
    }
    return m;
}

Dataset load_dataset(const std::string& x_path, const std::string& y_path, const CategoryLayout& layout) {
    const CsvTable xt = read_csv_file(x_path);
    const CsvTable yt = read_csv_file(y_path);
    if (xt.rows.size() != yt.rows.size()) {
        throw DataError("'" + x_path + "' has " + std::to_string(xt.rows.size()) + " rows but '" + y_path + "' has " +
                        std::to_string(yt.rows.size()));
    }
    if (xt.rows.size() < 2) throw DataError("'" + x_path + "' needs at least two data rows");
    return make_dataset(numeric_matrix(xt, x_path), response_matrix(yt, layout, y_path), layout, xt.header);
}

Model make_model(const Dataset& data, const FitResult& fit, const FitConfig& config) {
    Model m;
    m.layout = data.layout;
    m.beta = fit.beta;
    m.standardization = data.standardization;
    m.predictor_names = data.predictor_names;
    m.lambda = fit.lambda;
    m.gamma = fit.gamma;
    m.objective = config.objective;
    m.penalty = config.penalty;
    m.iterations = fit.iterations;
    m.converged = fit.converged;
    m.partition = fit.partition;
    return m;
}

std::string model_to_json(const Model& model) {
    json j;
    j["format"] = "mvcat-model";
    j["version"] = kModelFormatVersion;
    j["layout"] = model.layout.cardinalities();
    j["predictor_names"] = model.predictor_names;
    j["center"] = to_vector(model.standardization.center);
    j["scale"] = to_vector(model.standardization.scale);
    j["lambda"] = model.lambda;
    j["gamma"] = model.gamma;
    j["objective"] = objective_name(model.objective);
    j["penalty"] = penalty_name(model.penalty);
    j["iterations"] = model.iterations;
    j["converged"] = model.converged;
    j["rows"] = model.beta.rows();
    j["classes"] = model.beta.cols();
    json nonzero = json::array();
    for (Eigen::Index r = 0; r < model.beta.rows(); ++r) {
        if ((model.beta.row(r).array() == 0.0).all()) continue;
        nonzero.push_back({{"row", r + 1}, {"values", to_vector(model.beta.row(r).transpose())}});
    }
    j["coefficients"] = std::move(nonzero);
    auto one_based = [](const std::vector<int>& rows) {
        std::vector<int> out;
        for (int r : rows) out.push_back(r + 1);
        return out;
    };
    j["partition"] = {{"log_odds", one_based(model.partition.log_odds)},
                      {"marginal", one_based(model.partition.marginal)},
                      {"irrelevant", one_based(model.partition.irrelevant)}};
    return j.dump(1);
}

void save_model(const Model& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path + "'");
    out << model_to_json(model) << '\n';
    if (!out) throw DataError("failed writing '" + path + "'");
}

Model model_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw DataError(std::string("model file is not valid JSON: ") + e.what());
    }
    try {
        if (j.at("format").get<std::string>() != "mvcat-model") throw DataError("not a model file");
        const int version = j.at("version").get<int>();
        if (version != kModelFormatVersion) {
            throw DataError("model format version " + std::to_string(version) + " is not supported (expected " +
                            std::to_string(kModelFormatVersion) + ")");
        }
        Model m;
        m.layout = CategoryLayout(j.at("layout").get<std::vector<int>>());
        m.predictor_names = j.at("predictor_names").get<std::vector<std::string>>();
        m.standardization.center = to_eigen(j.at("center").get<std::vector<double>>());
        m.standardization.scale = to_eigen(j.at("scale").get<std::vector<double>>());
        m.lambda = j.at("lambda").get<double>();
        m.gamma = j.at("gamma").get<double>();
        m.objective = j.at("objective").get<std::string>() == "full" ? LossKind::Full : LossKind::Observed;
        m.penalty = j.at("penalty").get<std::string>() == "entrywise-l1" ? Penalty::EntrywiseL1 : Penalty::LogOddsGroup;
        m.iterations = j.at("iterations").get<int>();
        m.converged = j.at("converged").get<bool>();
        const auto rows = j.at("rows").get<Eigen::Index>();
        const auto classes = j.at("classes").get<Eigen::Index>();
        if (classes != m.layout.total_classes() || rows != m.standardization.columns() + 1 ||
            m.standardization.scale.size() != m.standardization.center.size()) {
            throw DataError("model dimensions are inconsistent");
        }
        m.beta = Eigen::MatrixXd::Zero(rows, classes);
        for (const auto& entry : j.at("coefficients")) {
            const auto r = entry.at("row").get<Eigen::Index>();
            const auto values = entry.at("values").get<std::vector<double>>();
            if (r < 1 || r > rows || static_cast<Eigen::Index>(values.size()) != classes) {
                throw DataError("model coefficient entry for row " + std::to_string(r) + " is malformed");
            }
            m.beta.row(r - 1) = to_eigen(values).transpose();
        }
        auto zero_based = [](const json& rows) {
            std::vector<int> out;
            for (const auto& r : rows) out.push_back(r.get<int>() - 1);
            return out;
        };
        const json& part = j.at("partition");
        m.partition.log_odds = zero_based(part.at("log_odds"));
        m.partition.marginal = zero_based(part.at("marginal"));
        m.partition.irrelevant = zero_based(part.at("irrelevant"));
        return m;
    } catch (const json::exception& e) {
        throw DataError(std::string("model file is malformed: ") + e.what());
    } catch (const DomainError& e) {
        throw DataError(std::string("model file is malformed: ") + e.what());
    }
}

Model load_model(const std::string& path) {
    auto in = open_input(path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return model_from_json(buffer.str());
}

void write_predictions_csv(std::ostream& out, const ProbabilityMatrix& probabilities, const CategoryLayout& layout) {
    out << "joint_class";
    for (int r = 0; r < layout.responses(); ++r) out << ",y" << r + 1;
    for (int c = 0; c < layout.total_classes(); ++c) {
        out << ",p";
        for (int cat : layout.categories_of(c)) out << '_' << cat + 1;
    }
    out << '\n';
    const auto old_precision = out.precision(17);
    for (Eigen::Index i = 0; i < probabilities.rows(); ++i) {
        Eigen::Index best = 0;
        for (Eigen::Index c = 1; c < probabilities.cols(); ++c) {
            if (probabilities(i, c) > probabilities(i, best)) best = c;
        }
        out << best + 1;
        for (int cat : layout.categories_of(static_cast<int>(best))) out << ',' << cat + 1;
        for (Eigen::Index c = 0; c < probabilities.cols(); ++c) out << ',' << probabilities(i, c);
        out << '\n';
    }
    out.precision(old_precision);
}

void write_design_csv(std::ostream& out, const OddsDesign& design) {
    const auto& labels = design.labels();
    out << "class";
    for (const auto& l : labels) out << ',' << l;
    out << '\n';
    for (Eigen::Index t = 0; t < design.classes(); ++t) {
        out << t + 1;
        for (Eigen::Index c = 0; c < design.columns(); ++c) out << ',' << design.contrasts()(t, c);
        out << '\n';
    }
}

}  // namespace mvcat
