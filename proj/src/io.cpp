#include "bsbt/io.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <openssl/evp.h>
#include <unistd.h>

#include "bsbt/errors.hpp"

namespace bsbt {

using nlohmann::json;

std::string format_double(double v) {
  if (std::isnan(v)) return "NA";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) return std::signbit(v) ? "-0" : "0";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw RuntimeFailure("cannot format number");
  return std::string(buf, ptr);
}

double parse_double(const std::string& text) {
  if (text == "NA" || text == "NaN" || text == "nan") return std::numeric_limits<double>::quiet_NaN();
  const char* begin = text.data();
  const char* end = text.data() + text.size();
  if (begin != end && *begin == '+') ++begin;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end || begin == end) throw ValidationError("not a number: '" + text + "'");
  return v;
}

namespace {

std::string row_ref(const std::string& source, std::size_t row) {
  return source + " row " + std::to_string(row);
}

std::string trim_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

}  // namespace

std::optional<std::size_t> CsvTable::find_column(const std::string& name) const {
  for (std::size_t c = 0; c < header.size(); ++c)
    if (header[c] == name) return c;
  return std::nullopt;
}

std::size_t CsvTable::column(const std::string& name, const std::string& source) const {
  if (auto c = find_column(name)) return *c;
  throw ValidationError(source + ": missing column '" + name + "'");
}

CsvTable parse_csv(const std::string& text, const std::string& source) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  bool field_started = false;
  std::size_t line = 1;
  std::size_t pos = 0;
  if (text.rfind("\xEF\xBB\xBF", 0) == 0) pos = 3;  // UTF-8 BOM
  auto end_record = [&]() {
    fields.push_back(trim_cr(std::move(field)));
    field.clear();
    // Blank lines are skipped.
    if (!(fields.size() == 1 && fields[0].empty())) records.push_back(std::move(fields));
    fields.clear();
    field_started = false;
  };
  for (; pos < text.size(); ++pos) {
    const char ch = text[pos];
    if (quoted) {
      if (ch == '"') {
        if (pos + 1 < text.size() && text[pos + 1] == '"') {
          field += '"';
          ++pos;
        } else {
          quoted = false;
        }
      } else {
        if (ch == '\n') ++line;
        field += ch;
      }
      continue;
    }
    if (ch == '"' && !field_started) {
      quoted = true;
      field_started = true;
    } else if (ch == ',') {
      fields.push_back(std::move(field));
      field.clear();
      field_started = false;
    } else if (ch == '\n') {
      end_record();
      ++line;
    } else {
      field += ch;
      field_started = true;
    }
  }
  if (quoted) throw ValidationError(source + ": unterminated quoted field near line " + std::to_string(line));
  if (!field.empty() || !fields.empty()) end_record();

  if (records.empty()) throw ValidationError(source + ": missing header row");
  CsvTable table;
  table.header = std::move(records.front());
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != table.header.size())
      throw ValidationError(row_ref(source, r + 1) + ": expected " + std::to_string(table.header.size()) +
                            " fields, found " + std::to_string(records[r].size()));
    table.rows.push_back(std::move(records[r]));
  }
  return table;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw RuntimeFailure("read failed: " + path.string());
  return ss.str();
}

CsvTable read_csv(const fs::path& path) { return parse_csv(read_file(path), path.filename().string()); }

std::string csv_field(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char ch : field) {
    if (ch == '"') out += '"';
    out += ch;
  }
  out += '"';
  return out;
}

void write_csv_row(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t c = 0; c < fields.size(); ++c) {
    if (c) out << ',';
    out << csv_field(fields[c]);
  }
  out << '\n';
}

std::string to_csv(const CsvTable& table) {
  std::ostringstream out;
  write_csv_row(out, table.header);
  for (const auto& row : table.rows) write_csv_row(out, row);
  return out.str();
}

AreaNetwork load_network(const fs::path& areas_path, const fs::path& edges_path, std::vector<EdgeSpec>* edges_out) {
  const CsvTable areas = read_csv(areas_path);
  const std::string asrc = areas_path.filename().string();
  const auto c_id = areas.column("id", asrc);
  const auto c_name = areas.find_column("name");
  const auto c_x = areas.find_column("x");
  const auto c_y = areas.find_column("y");
  const auto c_img = areas.find_column("image_url");
  std::vector<Area> list;
  for (std::size_t r = 0; r < areas.rows.size(); ++r) {
    const auto& row = areas.rows[r];
    Area a;
    a.id = row[c_id];
    if (a.id.empty()) throw ValidationError(row_ref(asrc, r + 2) + ": empty id");
    a.name = c_name ? row[*c_name] : a.id;
    try {
      if (c_x && !row[*c_x].empty()) a.x = parse_double(row[*c_x]);
      if (c_y && !row[*c_y].empty()) a.y = parse_double(row[*c_y]);
    } catch (const ValidationError& e) {
      throw ValidationError(row_ref(asrc, r + 2) + ": " + e.what());
    }
    if (c_img) a.image_url = row[*c_img];
    list.push_back(std::move(a));
  }

  const CsvTable edges = read_csv(edges_path);
  const std::string esrc = edges_path.filename().string();
  const auto c_a = edges.column("id_a", esrc);
  const auto c_b = edges.column("id_b", esrc);
  const auto c_w = edges.find_column("weight");
  std::vector<EdgeSpec> specs;
  for (std::size_t r = 0; r < edges.rows.size(); ++r) {
    const auto& row = edges.rows[r];
    EdgeSpec e{row[c_a], row[c_b], 1.0};
    try {
      if (c_w && !row[*c_w].empty()) e.weight = parse_double(row[*c_w]);
    } catch (const ValidationError& err) {
      throw ValidationError(row_ref(esrc, r + 2) + ": " + err.what());
    }
    specs.push_back(std::move(e));
  }
  AreaNetwork net;
  try {
    net = build_network(std::move(list), specs);
  } catch (const ValidationError& e) {
    throw ValidationError(esrc + ": " + e.what());
  }
  if (edges_out) *edges_out = std::move(specs);
  return net;
}

std::vector<ComparisonRecord> parse_comparisons(const CsvTable& table, const AreaNetwork& net, const std::string& source) {
  const auto c_judge = table.column("judge_id", source);
  const auto c_i = table.column("area_i", source);
  const auto c_j = table.column("area_j", source);
  const auto c_out = table.column("outcome", source);
  const auto c_ts = table.find_column("timestamp");
  std::vector<ComparisonRecord> records;
  records.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    try {
      ComparisonRecord rec{row[c_judge], row[c_i], row[c_j], parse_outcome(row[c_out]), c_ts ? row[*c_ts] : ""};
      validate_record(net, rec);
      records.push_back(std::move(rec));
    } catch (const ValidationError& e) {
      throw ValidationError(row_ref(source, r + 2) + ": " + e.what());
    }
  }
  return records;
}

std::vector<JudgeProfile> parse_judges(const CsvTable& table, const AreaNetwork& net, const std::string& source) {
  const auto c_id = table.column("judge_id", source);
  const auto c_fam = table.column("familiarity", source);
  std::vector<JudgeProfile> judges;
  std::set<std::string> seen;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    JudgeProfile p;
    p.judge_id = row[c_id];
    if (p.judge_id.empty()) throw ValidationError(row_ref(source, r + 2) + ": empty judge_id");
    if (!seen.insert(p.judge_id).second)
      throw ValidationError(row_ref(source, r + 2) + ": duplicate judge_id '" + p.judge_id + "'");
    for (std::size_t c = 0; c < table.header.size(); ++c)
      if (c != c_id && c != c_fam) p.covariates[table.header[c]] = row[c];
    std::stringstream fam(row[c_fam]);
    std::string id;
    while (std::getline(fam, id, '|')) {
      if (id.empty()) continue;
      if (!net.index_of(id))
        throw ValidationError(row_ref(source, r + 2) + ": familiarity lists unknown area '" + id + "'");
      p.familiarity.insert(id);
    }
    judges.push_back(std::move(p));
  }
  return judges;
}

Dataset load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ValidationError("dataset directory not found: " + dir.string());
  for (const char* name : {"areas.csv", "edges.csv", "comparisons.csv"})
    if (!fs::exists(dir / name)) throw ValidationError("missing file: " + (dir / name).string());
  Dataset ds;
  ds.network = load_network(dir / "areas.csv", dir / "edges.csv", &ds.edges);
  ds.records = parse_comparisons(read_csv(dir / "comparisons.csv"), ds.network, "comparisons.csv");
  if (fs::exists(dir / "judges.csv")) {
    ds.judges = parse_judges(read_csv(dir / "judges.csv"), ds.network, "judges.csv");
    std::set<std::string> roster;
    for (const auto& j : ds.judges) roster.insert(j.judge_id);
    for (std::size_t r = 0; r < ds.records.size(); ++r)
      if (!roster.count(ds.records[r].judge_id))
        throw ValidationError(row_ref("comparisons.csv", r + 2) + ": judge '" + ds.records[r].judge_id +
                              "' is not in judges.csv");
  }
  return ds;
}

std::string areas_csv(const AreaNetwork& net) {
  bool images = false;
  for (const auto& a : net.areas()) images = images || !a.image_url.empty();
  CsvTable t;
  t.header = {"id", "name", "x", "y"};
  if (images) t.header.push_back("image_url");
  for (const auto& a : net.areas()) {
    std::vector<std::string> row{a.id, a.name, a.x ? format_double(*a.x) : "", a.y ? format_double(*a.y) : ""};
    if (images) row.push_back(a.image_url);
    t.rows.push_back(std::move(row));
  }
  return to_csv(t);
}

std::string edges_csv(const AreaNetwork& net) {
  CsvTable t;
  t.header = {"id_a", "id_b", "weight"};
  for (const auto& e : net.edges()) t.rows.push_back({net.area(e.a).id, net.area(e.b).id, format_double(e.weight)});
  return to_csv(t);
}

void write_comparisons_header(std::ostream& out) {
  write_csv_row(out, {"judge_id", "area_i", "area_j", "outcome", "timestamp"});
}

void write_comparison_row(std::ostream& out, const ComparisonRecord& r) {
  write_csv_row(out, {r.judge_id, r.area_i, r.area_j, to_string(r.outcome), r.timestamp});
}

std::string comparisons_csv(const std::vector<ComparisonRecord>& records) {
  std::ostringstream out;
  write_comparisons_header(out);
  for (const auto& r : records) write_comparison_row(out, r);
  return out.str();
}

std::string judges_csv(const std::vector<JudgeProfile>& judges) {
  // gender and occupation first when present, then other covariates by name.
  std::set<std::string> names;
  for (const auto& j : judges)
    for (const auto& [k, v] : j.covariates) names.insert(k);
  std::vector<std::string> cols;
  for (const char* fixed : {"gender", "occupation"})
    if (names.erase(fixed)) cols.push_back(fixed);
  cols.insert(cols.end(), names.begin(), names.end());

  CsvTable t;
  t.header.push_back("judge_id");
  t.header.insert(t.header.end(), cols.begin(), cols.end());
  t.header.push_back("familiarity");
  for (const auto& j : judges) {
    std::vector<std::string> row{j.judge_id};
    for (const auto& c : cols) {
      auto it = j.covariates.find(c);
      row.push_back(it == j.covariates.end() ? "" : it->second);
    }
    std::string fam;
    for (const auto& id : j.familiarity) fam += (fam.empty() ? "" : "|") + id;
    row.push_back(fam);
    t.rows.push_back(std::move(row));
  }
  return to_csv(t);
}

CovariateGrouping group_by_covariate(const std::vector<JudgeProfile>& judges, const std::string& covariate) {
  if (judges.empty()) throw ValidationError("grouping by '" + covariate + "' needs judges.csv");
  std::set<std::string> values;
  for (const auto& j : judges) {
    auto it = j.covariates.find(covariate);
    if (it == j.covariates.end() || it->second.empty())
      throw ValidationError("judge '" + j.judge_id + "' has no value for covariate '" + covariate + "'");
    values.insert(it->second);
  }
  if (values.size() < 2) throw ValidationError("covariate '" + covariate + "' takes a single value");
  CovariateGrouping out;
  out.labels.assign(values.begin(), values.end());
  out.grouping.num_groups = out.labels.size();
  out.grouping.fallback_group.reset();
  for (const auto& j : judges) {
    const auto& v = j.covariates.at(covariate);
    out.grouping.group_of[j.judge_id] =
        static_cast<std::size_t>(std::lower_bound(out.labels.begin(), out.labels.end(), v) - out.labels.begin());
  }
  return out;
}

std::string matrix_csv(const Eigen::MatrixXd& m, const std::vector<std::string>& header) {
  if (header.size() != static_cast<std::size_t>(m.cols())) throw ValidationError("matrix header width mismatch");
  std::ostringstream out;
  write_csv_row(out, header);
  std::vector<std::string> row(header.size());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = format_double(m(r, c));
    write_csv_row(out, row);
  }
  return out.str();
}

Eigen::MatrixXd parse_matrix_csv(const CsvTable& table, std::size_t skip_columns) {
  if (table.header.size() < skip_columns) throw ValidationError("matrix CSV too narrow");
  const auto cols = static_cast<Eigen::Index>(table.header.size() - skip_columns);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(table.rows.size()), cols);
  for (std::size_t r = 0; r < table.rows.size(); ++r)
    for (Eigen::Index c = 0; c < cols; ++c)
      m(static_cast<Eigen::Index>(r), c) = parse_double(table.rows[r][skip_columns + static_cast<std::size_t>(c)]);
  return m;
}

json mcmc_config_json(const MCMCConfig& c) {
  return json{{"iterations", c.iterations},
              {"burn_in", c.burn_in},
              {"thinning", c.thinning},
              {"delta", c.delta},
              {"delta_beta", c.delta_beta ? json(*c.delta_beta) : json(nullptr)},
              {"chi", c.chi},
              {"omega", c.omega},
              {"seed", c.seed},
              {"store_every_variance_draw", c.store_every_variance_draw},
              {"dof_adjust", c.dof_adjust},
              {"start", to_string(c.start)}};
}

MCMCConfig mcmc_config_from_json(const json& j, MCMCConfig c) {
  try {
    if (j.contains("iterations")) c.iterations = j.at("iterations").get<std::int64_t>();
    if (j.contains("burn_in")) c.burn_in = j.at("burn_in").get<std::int64_t>();
    if (j.contains("thinning")) c.thinning = j.at("thinning").get<std::int64_t>();
    if (j.contains("delta")) c.delta = j.at("delta").get<double>();
    if (j.contains("delta_beta")) {
      if (j.at("delta_beta").is_null())
        c.delta_beta.reset();
      else
        c.delta_beta = j.at("delta_beta").get<double>();
    }
    if (j.contains("chi")) c.chi = j.at("chi").get<double>();
    if (j.contains("omega")) c.omega = j.at("omega").get<double>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("store_every_variance_draw")) c.store_every_variance_draw = j.at("store_every_variance_draw").get<bool>();
    if (j.contains("dof_adjust")) c.dof_adjust = j.at("dof_adjust").get<bool>();
    if (j.contains("start")) c.start = parse_start_point(j.at("start").get<std::string>());
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad MCMC config: ") + e.what());
  }
  c.validate();
  return c;
}

namespace {

std::string draws_csv(const std::vector<std::int64_t>& iterations, const Eigen::MatrixXd& draws, const AreaNetwork& net) {
  std::ostringstream out;
  std::vector<std::string> header{"iteration"};
  for (const auto& a : net.areas()) header.push_back(a.id);
  write_csv_row(out, header);
  std::vector<std::string> row(header.size());
  for (Eigen::Index r = 0; r < draws.rows(); ++r) {
    row[0] = std::to_string(iterations[static_cast<std::size_t>(r)]);
    for (Eigen::Index c = 0; c < draws.cols(); ++c) row[static_cast<std::size_t>(c) + 1] = format_double(draws(r, c));
    write_csv_row(out, row);
  }
  return out.str();
}

std::vector<std::int64_t> iteration_column(const CsvTable& t, const std::string& source) {
  if (t.header.empty() || t.header[0] != "iteration") throw ValidationError(source + ": first column must be 'iteration'");
  std::vector<std::int64_t> out;
  for (const auto& row : t.rows) {
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(row[0].data(), row[0].data() + row[0].size(), v);
    if (ec != std::errc() || ptr != row[0].data() + row[0].size()) throw ValidationError(source + ": bad iteration");
    out.push_back(v);
  }
  return out;
}

}  // namespace

ChainFiles chain_files(const PosteriorSamples& s, const AreaNetwork& net,
                       const std::vector<std::string>& covariate_labels, const json& extra_meta) {
  if (static_cast<std::size_t>(s.lambda.cols()) != net.size()) throw ValidationError("chain width does not match the network");
  ChainFiles out;
  json meta{{"format_version", kFormatVersion},
            {"config", mcmc_config_json(s.config)},
            {"stored_draws", s.stored()},
            {"lambda_acceptance", s.lambda_acceptance},
            {"beta_acceptance", s.beta_acceptance},
            {"covariates", covariate_labels},
            {"num_covariates", s.beta.size()}};
  if (!extra_meta.is_null()) meta["extra"] = extra_meta;
  out.files["chain_meta.json"] = meta.dump(2) + "\n";
  out.files["lambda.csv"] = draws_csv(s.iterations, s.lambda, net);
  for (std::size_t p = 0; p < s.beta.size(); ++p)
    out.files["beta_" + std::to_string(p) + ".csv"] = draws_csv(s.iterations, s.beta[p], net);

  std::ostringstream alpha;
  std::vector<std::string> header{"iteration", "alpha_sq_lambda"};
  for (std::size_t p = 0; p < s.alpha_sq_beta.size(); ++p) header.push_back("alpha_sq_" + std::to_string(p));
  write_csv_row(alpha, header);
  std::vector<std::string> row(header.size());
  for (std::size_t r = 0; r < s.variance_iterations.size(); ++r) {
    row[0] = std::to_string(s.variance_iterations[r]);
    row[1] = format_double(s.alpha_sq_lambda[r]);
    for (std::size_t p = 0; p < s.alpha_sq_beta.size(); ++p) row[2 + p] = format_double(s.alpha_sq_beta[p][r]);
    write_csv_row(alpha, row);
  }
  out.files["alpha_sq.csv"] = alpha.str();
  return out;
}

PosteriorSamples load_chain(const fs::path& dir) {
  if (!fs::exists(dir / "chain_meta.json")) throw ValidationError("not a chain directory: " + dir.string());
  json meta;
  try {
    meta = json::parse(read_file(dir / "chain_meta.json"));
  } catch (const json::exception& e) {
    throw ValidationError("chain_meta.json: " + std::string(e.what()));
  }
  if (meta.value("format_version", 0) != kFormatVersion) throw ValidationError("chain_meta.json: unsupported format_version");
  PosteriorSamples s;
  s.config = mcmc_config_from_json(meta.at("config"));
  s.lambda_acceptance = meta.at("lambda_acceptance").get<double>();
  s.beta_acceptance = meta.at("beta_acceptance").get<std::vector<double>>();
  const CsvTable lambda = read_csv(dir / "lambda.csv");
  s.iterations = iteration_column(lambda, "lambda.csv");
  s.lambda = parse_matrix_csv(lambda, 1);
  const auto p_count = meta.at("num_covariates").get<std::size_t>();
  for (std::size_t p = 0; p < p_count; ++p) {
    const std::string name = "beta_" + std::to_string(p) + ".csv";
    s.beta.push_back(parse_matrix_csv(read_csv(dir / name), 1));
  }
  const CsvTable alpha = read_csv(dir / "alpha_sq.csv");
  s.variance_iterations = iteration_column(alpha, "alpha_sq.csv");
  const Eigen::MatrixXd a = parse_matrix_csv(alpha, 1);
  if (static_cast<std::size_t>(a.cols()) != 1 + p_count) throw ValidationError("alpha_sq.csv: wrong number of columns");
  for (Eigen::Index r = 0; r < a.rows(); ++r) s.alpha_sq_lambda.push_back(a(r, 0));
  s.alpha_sq_beta.resize(p_count);
  for (std::size_t p = 0; p < p_count; ++p)
    for (Eigen::Index r = 0; r < a.rows(); ++r) s.alpha_sq_beta[p].push_back(a(r, static_cast<Eigen::Index>(p) + 1));
  return s;
}

std::string summary_csv(const AreaNetwork& net, const std::vector<ParameterSummary>& lambda) {
  if (lambda.size() != net.size()) throw ValidationError("summary length does not match the network");
  CsvTable t;
  t.header = {"area_id", "mean", "median", "variance", "q025", "q975"};
  for (std::size_t i = 0; i < lambda.size(); ++i) {
    const auto& s = lambda[i];
    t.rows.push_back({net.area(i).id, format_double(s.mean), format_double(s.median), format_double(s.variance),
                      format_double(s.q025), format_double(s.q975)});
  }
  return to_csv(t);
}

std::vector<std::pair<std::string, double>> read_summary_column(const fs::path& path, const std::string& column) {
  const CsvTable t = read_csv(path);
  const std::string src = path.filename().string();
  const auto c_id = t.column("area_id", src);
  const auto c_v = t.column(column, src);
  std::vector<std::pair<std::string, double>> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    try {
      out.emplace_back(t.rows[r][c_id], parse_double(t.rows[r][c_v]));
    } catch (const ValidationError& e) {
      throw ValidationError(row_ref(src, r + 2) + ": " + e.what());
    }
  }
  return out;
}

std::string bt_fit_csv(const AreaNetwork& net, const BTFitResult& fit) {
  CsvTable t;
  t.header = {"area_id", "lambda_hat", "quasi_variance", "defined"};
  for (std::size_t i = 0; i < net.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    t.rows.push_back({net.area(i).id, format_double(fit.lambda_hat(k)), format_double(fit.quasi_variances(k)),
                      fit.defined(i) ? "true" : "false"});
  }
  return to_csv(t);
}

std::string traces_csv(const std::vector<TraceRow>& rows) {
  std::ostringstream out;
  write_csv_row(out, {"iteration", "parameter", "value"});
  for (const auto& r : rows) write_csv_row(out, {std::to_string(r.iteration), r.parameter, format_double(r.value)});
  return out.str();
}

std::string judge_scores_csv(const std::vector<JudgeScore>& scores) {
  std::ostringstream out;
  write_csv_row(out, {"judge_id", "n_comparisons", "x2"});
  for (const auto& s : scores) write_csv_row(out, {s.judge_id, std::to_string(s.n_comparisons), format_double(s.x2)});
  return out.str();
}

std::string study_report_csv(const StudyReport& report) {
  std::ostringstream out;
  write_csv_row(out, {"scenario", "size", "seed", "model", "mae", "runtime_seconds", "defined"});
  for (const auto& r : report.rows)
    write_csv_row(out, {to_string(r.scenario), std::to_string(r.size), std::to_string(r.seed_index), to_string(r.model),
                        r.mae ? format_double(*r.mae) : "NA", format_double(r.runtime_seconds),
                        r.mae ? "true" : "false"});
  return out.str();
}

json study_config_json(const StudyConfig& c) {
  std::vector<std::string> models;
  for (auto m : c.models) models.push_back(to_string(m));
  return json{{"scenario", to_string(c.scenario)},
              {"sizes", c.sizes},
              {"seeds", c.n_seeds},
              {"base_seed", c.base_seed},
              {"models", models},
              {"covariance", {{"kind", to_string(c.kernel)}, {"length_scale", c.length_scale}, {"truth_alpha_sq", c.truth_alpha_sq}}},
              {"n_areas_1d", c.n_areas_1d},
              {"grid", {{"rows", c.grid_rows}, {"cols", c.grid_cols}}},
              {"mcmc", mcmc_config_json(c.mcmc)},
              {"jobs", c.jobs}};
}

StudyConfig study_config_from_json(const json& j) {
  StudyConfig c;
  try {
    if (!j.is_object()) throw ValidationError("scenario config must be a JSON object");
    static const std::set<std::string> known{"scenario", "sizes", "seeds", "base_seed", "models", "covariance",
                                             "n_areas_1d", "grid", "mcmc", "jobs"};
    for (const auto& [k, v] : j.items())
      if (!known.count(k)) throw ValidationError("unknown scenario config key '" + k + "'");
    if (j.contains("scenario")) c.scenario = parse_scenario(j.at("scenario").get<std::string>());
    if (j.contains("sizes")) c.sizes = j.at("sizes").get<std::vector<std::size_t>>();
    if (j.contains("seeds")) c.n_seeds = j.at("seeds").get<std::size_t>();
    if (j.contains("base_seed")) c.base_seed = j.at("base_seed").get<std::uint64_t>();
    if (j.contains("models")) {
      c.models.clear();
      for (const auto& m : j.at("models")) c.models.push_back(parse_model(m.get<std::string>()));
    }
    if (j.contains("covariance")) {
      const auto& cov = j.at("covariance");
      if (cov.contains("kind")) c.kernel = parse_kernel_kind(cov.at("kind").get<std::string>());
      if (cov.contains("length_scale")) c.length_scale = cov.at("length_scale").get<double>();
      if (cov.contains("truth_alpha_sq")) c.truth_alpha_sq = cov.at("truth_alpha_sq").get<double>();
    }
    if (j.contains("n_areas_1d")) c.n_areas_1d = j.at("n_areas_1d").get<std::size_t>();
    if (j.contains("grid")) {
      c.grid_rows = j.at("grid").value("rows", c.grid_rows);
      c.grid_cols = j.at("grid").value("cols", c.grid_cols);
    }
    if (j.contains("mcmc")) c.mcmc = mcmc_config_from_json(j.at("mcmc"), c.mcmc);
    if (j.contains("jobs")) c.jobs = j.at("jobs").get<std::size_t>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad scenario config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw RuntimeFailure("SHA-256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int k = 0; k < len; ++k) {
    out += hex[digest[k] >> 4];
    out += hex[digest[k] & 15];
  }
  return out;
}

void ResultBundle::add(const std::string& relative_path, std::string content) {
  if (relative_path.empty() || relative_path == "manifest.json" || fs::path(relative_path).is_absolute() ||
      relative_path.find("..") != std::string::npos)
    throw ValidationError("bad output file name '" + relative_path + "'");
  files_[relative_path] = std::move(content);
}

json ResultBundle::manifest() const {
  json files = json::array();
  for (const auto& [name, content] : files_)
    files.push_back({{"path", name}, {"bytes", content.size()}, {"sha256", sha256_hex(content)}});
  return json{{"format_version", kFormatVersion},
              {"tool_version", kToolVersion},
              {"seeds", seeds_},
              {"config", config_},
              {"config_sha256", sha256_hex(config_.dump())},
              {"files", files}};
}

namespace {

void write_bytes(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  out.close();
  if (!out) throw RuntimeFailure("write failed: " + path.string());
}

fs::path sibling_temp(const fs::path& dir, const char* tag) {
  static std::atomic<unsigned> counter{0};
  const fs::path parent = dir.has_parent_path() ? dir.parent_path() : fs::path(".");
  return parent / ("." + dir.filename().string() + "." + tag + "-" + std::to_string(::getpid()) + "-" +
                   std::to_string(counter.fetch_add(1)));
}

// Moves `staged` into place at `dir`, replacing whatever was there.
void swap_into_place(const fs::path& staged, const fs::path& dir) {
  std::error_code ec;
  fs::path old;
  if (fs::exists(dir)) {
    old = sibling_temp(dir, "old");
    fs::rename(dir, old, ec);
    if (ec) throw RuntimeFailure("cannot replace " + dir.string() + ": " + ec.message());
  }
  fs::rename(staged, dir, ec);
  if (ec) {
    if (!old.empty()) fs::rename(old, dir);
    throw RuntimeFailure("cannot publish " + dir.string() + ": " + ec.message());
  }
  if (!old.empty()) fs::remove_all(old, ec);
}

}  // namespace

json ResultBundle::publish(const fs::path& dir) const {
  if (dir.empty()) throw ValidationError("output directory is empty");
  const fs::path target = dir.filename().empty() ? dir.parent_path() : dir;
  std::error_code ec;
  if (target.has_parent_path()) fs::create_directories(target.parent_path(), ec);
  const fs::path staged = sibling_temp(target, "tmp");
  try {
    fs::create_directories(staged);
    for (const auto& [name, content] : files_) {
      const fs::path p = staged / name;
      fs::create_directories(p.parent_path());
      write_bytes(p, content);
    }
    const json m = manifest();
    write_bytes(staged / "manifest.json", m.dump(2) + "\n");
    swap_into_place(staged, target);
    return m;
  } catch (const fs::filesystem_error& e) {
    fs::remove_all(staged, ec);
    throw RuntimeFailure(std::string("I/O failure: ") + e.what());
  } catch (...) {
    fs::remove_all(staged, ec);
    throw;
  }
}

void save_dataset(const Dataset& ds, const fs::path& dir) {
  const fs::path target = dir.filename().empty() ? dir.parent_path() : dir;
  std::error_code ec;
  if (target.has_parent_path()) fs::create_directories(target.parent_path(), ec);
  const fs::path staged = sibling_temp(target, "tmp");
  try {
    fs::create_directories(staged);
    write_bytes(staged / "areas.csv", areas_csv(ds.network));
    write_bytes(staged / "edges.csv", edges_csv(ds.network));
    write_bytes(staged / "comparisons.csv", comparisons_csv(ds.records));
    if (!ds.judges.empty()) write_bytes(staged / "judges.csv", judges_csv(ds.judges));
    swap_into_place(staged, target);
  } catch (const fs::filesystem_error& e) {
    fs::remove_all(staged, ec);
    throw RuntimeFailure(std::string("I/O failure: ") + e.what());
  } catch (...) {
    fs::remove_all(staged, ec);
    throw;
  }
}

}  // namespace bsbt
