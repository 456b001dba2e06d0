#pragma once

// CSV and JSON emission. Floats are written as the shortest decimal string that
// reads back to the same double, and rows keep the order they were added in,
// so two runs over the same inputs produce byte-identical files.

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tps/fock.hpp"
#include "tps/nongauss.hpp"
#include "tps/quadratures.hpp"
#include "tps/twomode.hpp"

namespace tps::io {

using json = nlohmann::ordered_json;

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string cell(double v) { return format_double(v); }
inline std::string cell(int v) { return std::to_string(v); }
inline std::string cell(std::size_t v) { return std::to_string(v); }
inline std::string cell(bool v) { return v ? "true" : "false"; }
inline std::string cell(const char* v) { return v; }
inline std::string cell(const std::string& v) {
  if (v.find_first_of(",\"\n") == std::string::npos) return v;
  std::string out = "\"";
  for (char c : v) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

class CsvTable {
public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {
    if (header_.empty()) throw ShapeError("CSV header is empty");
  }

  template <class... Ts>
  void add(const Ts&... values) {
    add_row({cell(values)...});
  }

  void add_row(std::vector<std::string> row) {
    if (row.size() != header_.size())
      throw ShapeError("CSV row has " + std::to_string(row.size()) + " cells, header has " +
                       std::to_string(header_.size()));
    rows_.push_back(std::move(row));
  }

  const std::vector<std::string>& header() const { return header_; }
  std::size_t rows() const { return rows_.size(); }

  std::string str() const {
    std::string out;
    auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out += ',';
        out += cells[i];
      }
      out += '\n';
    };
    std::vector<std::string> head;
    for (const auto& h : header_) head.push_back(cell(h));
    line(head);
    for (const auto& r : rows_) line(r);
    return out;
  }

private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

inline void write_text(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot open '" + path.string() + "' for writing");
  out << content;
  if (!out) throw ConfigError("failed writing '" + path.string() + "'");
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read '" + path.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// ---------------------------------------------------------------------------
// Density matrices

inline json matrix_json(const CMatrix& m, bool imaginary) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(imaginary ? m(i, j).imag() : m(i, j).real());
    rows.push_back(std::move(r));
  }
  return rows;
}

/// {"dim", "real", "imag"} with row-major nested arrays, Fock basis |0>..|dim-1>.
inline json density_to_json(const DensityOp& rho) {
  json j;
  j["dim"] = rho.dim();
  j["real"] = matrix_json(rho.matrix(), false);
  j["imag"] = matrix_json(rho.matrix(), true);
  return j;
}

/// Labelled multimode form: "labels" lists the occupation tuple of every basis state.
inline json density_to_json(const LabeledState& s) {
  json j;
  j["modes"] = s.modes();
  j["dim"] = s.size();
  json labels = json::array();
  for (const auto& l : s.labels()) {
    json t = json::array();
    for (int m = 0; m < s.modes(); ++m) t.push_back(l[m]);
    labels.push_back(std::move(t));
  }
  j["labels"] = std::move(labels);
  j["real"] = matrix_json(s.rho().matrix(), false);
  j["imag"] = matrix_json(s.rho().matrix(), true);
  return j;
}

inline DensityOp density_from_json(const json& j) {
  try {
    const int dim = j.at("dim").get<int>();
    if (dim < 1) throw ShapeError("density JSON: dim must be >= 1");
    const auto& re = j.at("real");
    const auto& im = j.at("imag");
    if (!re.is_array() || !im.is_array() || static_cast<int>(re.size()) != dim || static_cast<int>(im.size()) != dim)
      throw ShapeError("density JSON: expected " + std::to_string(dim) + " rows");
    CMatrix m(dim, dim);
    for (int a = 0; a < dim; ++a) {
      if (static_cast<int>(re[a].size()) != dim || static_cast<int>(im[a].size()) != dim)
        throw ShapeError("density JSON: row " + std::to_string(a) + " has the wrong length");
      for (int b = 0; b < dim; ++b) m(a, b) = cplx(re[a][b].get<double>(), im[a][b].get<double>());
    }
    if (detail::hermiticity_error(m) > 1e-12) throw InvalidState("density JSON is not Hermitian");
    return DensityOp(m);
  } catch (const json::exception& e) {
    throw ShapeError(std::string("density JSON: ") + e.what());
  }
}

inline CsvTable populations_table(const DensityOp& rho) {
  CsvTable t({"n", "population"});
  const RVector p = rho.populations();
  for (int n = 0; n < p.size(); ++n) t.add(n, p(n));
  return t;
}

// ---------------------------------------------------------------------------
// Phase-space grids

inline CsvTable wigner_table(const WignerGrid& g) {
  CsvTable t({"x", "p", "value"});
  for (int i = 0; i < g.spec.n_x; ++i)
    for (int j = 0; j < g.spec.n_p; ++j) t.add(g.spec.x(i), g.spec.p(j), g.values(i, j));
  return t;
}

inline json wigner_sidecar(const WignerGrid& g) {
  json j;
  j["x_min"] = g.spec.x_min;
  j["x_max"] = g.spec.x_max;
  j["p_min"] = g.spec.p_min;
  j["p_max"] = g.spec.p_max;
  j["n_x"] = g.spec.n_x;
  j["n_p"] = g.spec.n_p;
  j["dx"] = g.spec.dx();
  j["dp"] = g.spec.dp();
  j["normalization"] = g.normalization();
  j["boundary_max"] = g.boundary_max();
  j["imaginary_residue"] = g.imaginary_residue;
  j["convention"] = "X = (a + a^dag)/sqrt(2), P = i(a^dag - a)/sqrt(2); rows ordered by x then p";
  return j;
}

/// Joint homodyne distribution in the (x, p, value) layout: x is the mode-1
/// quadrature value, p the mode-2 one.
inline CsvTable joint_table(const JointDistribution& d) {
  CsvTable t({"x", "p", "value"});
  for (int i = 0; i < d.axis1.n; ++i)
    for (int j = 0; j < d.axis2.n; ++j) t.add(d.axis1.at(i), d.axis2.at(j), d.values(i, j));
  return t;
}

inline json joint_sidecar(const JointDistribution& d, double phi1, double phi2) {
  json j;
  j["x_min"] = d.axis1.min;
  j["x_max"] = d.axis1.max;
  j["n_x"] = d.axis1.n;
  j["p_min"] = d.axis2.min;
  j["p_max"] = d.axis2.max;
  j["n_p"] = d.axis2.n;
  j["phi_1"] = phi1;
  j["phi_2"] = phi2;
  j["normalization"] = d.normalization();
  j["boundary_max"] = d.boundary_max();
  j["convention"] = "x: mode-1 quadrature at phi_1, p: mode-2 quadrature at phi_2; rows ordered by x then p";
  return j;
}

// ---------------------------------------------------------------------------
// Sweeps

struct NongaussRow {
  double xi = 0.0;
  double alpha_p = 0.0;
  double theta = 0.0;
  double delta = 0.0;
  double negativity = 0.0;
};

inline CsvTable nongauss_table(const std::vector<NongaussRow>& rows) {
  CsvTable t({"xi", "alpha_p", "theta", "delta", "negativity"});
  for (const auto& r : rows) t.add(r.xi, r.alpha_p, r.theta, r.delta, r.negativity);
  return t;
}

inline CsvTable ppt_table(const EntanglementScan& scan) {
  CsvTable t({"t", "xi_0", "xi_pi", "k", "l", "nu_tilde_minus", "guard_ok", "verdict"});
  for (const auto& p : scan.points)
    for (const auto& r : p.results) t.add(p.t, p.xi0, p.xi_pi, r.k, r.l, r.nu_tilde_minus, r.guard_ok, r.verdict());
  return t;
}

}  // namespace tps::io
