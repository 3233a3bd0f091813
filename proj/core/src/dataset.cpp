#include "ieoml/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace ieo {

std::string to_string(ColumnKind kind) {
  switch (kind) {
    case ColumnKind::Numeric: return "numeric";
    case ColumnKind::Categorical: return "categorical";
    case ColumnKind::Boolean: return "boolean";
  }
  return "numeric";
}

ColumnKind column_kind_from_string(const std::string& text) {
  if (text == "numeric") return ColumnKind::Numeric;
  if (text == "categorical") return ColumnKind::Categorical;
  if (text == "boolean") return ColumnKind::Boolean;
  throw PreconditionError("unknown column kind '" + text + "'");
}

void FeatureSchema::validate() const {
  if (columns.empty()) throw PreconditionError("schema: at least one feature column required");
  std::unordered_set<std::string> seen;
  for (const auto& c : columns) {
    if (c.name.empty()) throw PreconditionError("schema: empty column name");
    if (!seen.insert(c.name).second) throw PreconditionError("schema: duplicate column '" + c.name + "'");
    if (c.name == target_column)
      throw PreconditionError("schema: target column '" + c.name + "' listed as a feature");
  }
}

std::optional<std::size_t> FeatureSchema::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i].name == name) return i;
  return std::nullopt;
}

void to_json(nlohmann::json& j, const FeatureSchema& schema) {
  j = nlohmann::json::object();
  j["target_column"] = schema.target_column;
  auto cols = nlohmann::json::array();
  for (const auto& c : schema.columns) {
    nlohmann::json col{{"name", c.name}, {"kind", to_string(c.kind)}};
    if (c.unit) col["unit"] = *c.unit;
    cols.push_back(std::move(col));
  }
  j["columns"] = std::move(cols);
}

void from_json(const nlohmann::json& j, FeatureSchema& schema) {
  schema = FeatureSchema{};
  schema.target_column = j.value("target_column", std::string("duration"));
  for (const auto& col : j.at("columns")) {
    ColumnSpec spec;
    spec.name = col.at("name").get<std::string>();
    spec.kind = column_kind_from_string(col.value("kind", std::string("numeric")));
    if (col.contains("unit")) spec.unit = col.at("unit").get<std::string>();
    schema.columns.push_back(std::move(spec));
  }
}

// ---------------------------------------------------------------------------

Dataset::Dataset(FeatureSchema schema, std::vector<std::vector<CellValue>> rows, std::vector<double> durations)
    : schema_(std::move(schema)), rows_(std::move(rows)), durations_(std::move(durations)) {
  schema_.validate();
  if (rows_.size() != durations_.size())
    throw PreconditionError("dataset: row count and duration count differ");
  for (std::size_t r = 0; r < rows_.size(); ++r) {
    if (rows_[r].size() != schema_.columns.size())
      throw PreconditionError("dataset: row " + std::to_string(r) + " has wrong arity");
    if (!std::isfinite(durations_[r]) || durations_[r] < 0.0)
      throw PreconditionError("dataset: duration at row " + std::to_string(r) + " not finite and >= 0");
    for (std::size_t c = 0; c < rows_[r].size(); ++c) {
      const auto& v = rows_[r][c];
      const bool text_kind = schema_.columns[c].kind == ColumnKind::Categorical;
      if (text_kind && std::holds_alternative<double>(v))
        throw PreconditionError("dataset: numeric value in categorical column " + schema_.columns[c].name);
      if (!text_kind && std::holds_alternative<std::string>(v))
        throw PreconditionError("dataset: text value in numeric column " + schema_.columns[c].name);
    }
  }
}

Dataset Dataset::select(std::span<const std::size_t> indices) const {
  std::vector<std::vector<CellValue>> rows;
  std::vector<double> durations;
  rows.reserve(indices.size());
  durations.reserve(indices.size());
  for (auto i : indices) {
    rows.push_back(rows_.at(i));
    durations.push_back(durations_.at(i));
  }
  return Dataset(schema_, std::move(rows), std::move(durations));
}

Dataset Dataset::with_numeric_column(const std::string& name, std::span<const double> values) const {
  if (values.size() != size()) throw PreconditionError("with_numeric_column: length mismatch");
  FeatureSchema schema = schema_;
  schema.columns.push_back({name, ColumnKind::Numeric, std::nullopt});
  auto rows = rows_;
  for (std::size_t r = 0; r < rows.size(); ++r) rows[r].emplace_back(values[r]);
  return Dataset(std::move(schema), std::move(rows), durations_);
}

bool operator==(const Dataset& a, const Dataset& b) {
  if (a.schema_.target_column != b.schema_.target_column) return false;
  if (a.schema_.columns.size() != b.schema_.columns.size()) return false;
  for (std::size_t i = 0; i < a.schema_.columns.size(); ++i) {
    if (a.schema_.columns[i].name != b.schema_.columns[i].name ||
        a.schema_.columns[i].kind != b.schema_.columns[i].kind)
      return false;
  }
  return a.rows_ == b.rows_ && a.durations_ == b.durations_;
}

// ---------------------------------------------------------------------------
// CSV

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t i = 0;
  if (text.size() >= 3 && static_cast<unsigned char>(text[0]) == 0xEF &&
      static_cast<unsigned char>(text[1]) == 0xBB && static_cast<unsigned char>(text[2]) == 0xBF)
    i = 3;  // UTF-8 BOM
  auto end_record = [&] {
    record.push_back(std::move(field));
    field.clear();
    if (!(record.size() == 1 && record[0].empty())) records.push_back(std::move(record));
    record.clear();
    field_started = false;
  };
  for (; i < text.size(); ++i) {
    const char ch = text[i];
    if (in_quotes) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(ch);
      }
      continue;
    }
    switch (ch) {
      case '"':
        if (!field_started) in_quotes = true;
        else field.push_back(ch);
        field_started = true;
        break;
      case ',':
        record.push_back(std::move(field));
        field.clear();
        field_started = false;
        break;
      case '\r':
        if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
        end_record();
        break;
      case '\n':
        end_record();
        break;
      default:
        field.push_back(ch);
        field_started = true;
    }
  }
  if (in_quotes) throw PreconditionError("csv: unterminated quoted field");
  if (field_started || !record.empty()) end_record();
  return records;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::optional<double> parse_number(const std::string& raw) {
  const std::string s = trim(raw);
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const auto* first = s.data();
  const auto* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::optional<double> parse_bool(const std::string& raw) {
  std::string s = trim(raw);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "true" || s == "1" || s == "yes" || s == "y" || s == "t") return 1.0;
  if (s == "false" || s == "0" || s == "no" || s == "n" || s == "f") return 0.0;
  return std::nullopt;
}

bool is_missing_token(const std::string& raw) {
  const std::string s = trim(raw);
  return s.empty() || s == "NA" || s == "N/A" || s == "NaN" || s == "nan" || s == "null";
}

std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

}  // namespace

std::optional<double> parse_timestamp_minutes(const std::string& text) {
  const std::string s = trim(text);
  int y = 0, mo = 0, d = 0, h = 0, mi = 0;
  double sec = 0.0;
  char sep = 0;
  std::istringstream in(s);
  char dash1 = 0, dash2 = 0, colon1 = 0, colon2 = 0;
  if (!(in >> y >> dash1 >> mo >> dash2 >> d)) return std::nullopt;
  if (dash1 != '-' || dash2 != '-') return std::nullopt;
  in.get(sep);
  if (sep != ' ' && sep != 'T') return std::nullopt;
  if (!(in >> h >> colon1 >> mi >> colon2 >> sec)) return std::nullopt;
  if (colon1 != ':' || colon2 != ':') return std::nullopt;
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || h < 0 || h > 23 || mi < 0 || mi > 59 || sec < 0 || sec >= 61)
    return std::nullopt;
  const auto days = days_from_civil(y, static_cast<unsigned>(mo), static_cast<unsigned>(d));
  return static_cast<double>(days) * 1440.0 + h * 60.0 + mi + sec / 60.0;
}

LoadResult load_csv(const std::string& path, const FeatureSchema& schema,
                    const std::map<std::string, std::string>& column_map, const CsvOptions& options) {
  schema.validate();
  std::ifstream file(path, std::ios::binary);
  if (!file) throw std::runtime_error("load_csv: cannot open '" + path + "'");
  std::stringstream buffer;
  buffer << file.rdbuf();
  auto records = parse_csv(buffer.str());
  if (records.empty()) throw std::runtime_error("load_csv: '" + path + "' has no header row");

  const auto& header = records.front();
  std::unordered_map<std::string, std::size_t> header_index;
  for (std::size_t i = 0; i < header.size(); ++i) header_index.emplace(trim(header[i]), i);
  auto locate = [&](const std::string& schema_name) -> std::size_t {
    const auto mapped = column_map.find(schema_name);
    const std::string& csv_name = mapped == column_map.end() ? schema_name : mapped->second;
    const auto it = header_index.find(csv_name);
    if (it == header_index.end())
      throw std::runtime_error("load_csv: column '" + csv_name + "' (for '" + schema_name + "') missing from header");
    return it->second;
  };

  std::vector<std::size_t> feature_cols;
  for (const auto& c : schema.columns) feature_cols.push_back(locate(c.name));
  std::optional<std::size_t> target_col;
  std::optional<std::pair<std::size_t, std::size_t>> stamp_cols;
  if (options.duration_from) {
    stamp_cols = {locate(options.duration_from->start_column), locate(options.duration_from->end_column)};
  } else {
    target_col = locate(schema.target_column);
  }
  std::vector<std::pair<std::size_t, std::unordered_set<std::string>>> filters;
  for (const auto& f : options.filters)
    filters.emplace_back(locate(f.column), std::unordered_set<std::string>(f.values.begin(), f.values.end()));

  LoadReport report;
  std::vector<std::vector<CellValue>> rows;
  std::vector<double> durations;
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    ++report.rows_read;
    auto field = [&](std::size_t idx) -> std::string { return idx < rec.size() ? rec[idx] : std::string(); };
    bool keep = true;
    for (const auto& [col, allowed] : filters) {
      if (!allowed.contains(trim(field(col)))) {
        keep = false;
        break;
      }
    }
    if (!keep) {
      ++report.dropped_by_filter;
      continue;
    }
    std::optional<double> duration;
    if (target_col) {
      duration = parse_number(field(*target_col));
    } else {
      const auto start = parse_timestamp_minutes(field(stamp_cols->first));
      const auto end = parse_timestamp_minutes(field(stamp_cols->second));
      if (start && end) duration = *end - *start;
    }
    if (!duration || *duration < 0.0) {
      ++report.dropped_bad_target;
      continue;
    }
    std::vector<CellValue> row;
    row.reserve(schema.columns.size());
    for (std::size_t c = 0; c < schema.columns.size(); ++c) {
      const std::string raw = field(feature_cols[c]);
      if (is_missing_token(raw)) {
        row.emplace_back(std::monostate{});
        continue;
      }
      switch (schema.columns[c].kind) {
        case ColumnKind::Numeric: {
          const auto v = parse_number(raw);
          if (v) row.emplace_back(*v);
          else row.emplace_back(std::monostate{});
          break;
        }
        case ColumnKind::Boolean: {
          const auto v = parse_bool(raw);
          if (v) row.emplace_back(*v);
          else row.emplace_back(std::monostate{});
          break;
        }
        case ColumnKind::Categorical:
          row.emplace_back(trim(raw));
          break;
      }
    }
    rows.push_back(std::move(row));
    durations.push_back(*duration);
  }
  report.rows_kept = rows.size();
  if (rows.empty()) throw std::runtime_error("load_csv: no usable rows in '" + path + "'");
  return {Dataset(schema, std::move(rows), std::move(durations)), report};
}

namespace {

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += '"';
  return out;
}

std::string shortest_repr(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

void write_csv(const Dataset& dataset, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_csv: cannot open '" + path + "'");
  const auto& cols = dataset.schema().columns;
  for (const auto& c : cols) out << csv_escape(c.name) << ',';
  out << csv_escape(dataset.schema().target_column) << '\n';
  for (std::size_t r = 0; r < dataset.size(); ++r) {
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const auto& v = dataset.cell(r, c);
      if (const auto* d = std::get_if<double>(&v)) {
        out << (cols[c].kind == ColumnKind::Boolean ? (*d != 0.0 ? "true" : "false") : shortest_repr(*d));
      } else if (const auto* s = std::get_if<std::string>(&v)) {
        out << csv_escape(*s);
      }
      out << ',';
    }
    out << shortest_repr(dataset.durations()[r]) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Encoding

EncodedMatrix EncodedMatrix::select_rows(std::span<const std::size_t> rows) const {
  EncodedMatrix out;
  out.values = values.select_rows(rows);
  out.feature_names = feature_names;
  out.row_index.reserve(rows.size());
  for (auto r : rows) out.row_index.push_back(row_index.at(r));
  return out;
}

EncodedMatrix EncodedMatrix::with_column(const std::string& name, std::span<const double> column) const {
  EncodedMatrix out;
  out.values = values.with_column(column);
  out.feature_names = feature_names;
  out.feature_names.push_back(name);
  out.row_index = row_index;
  return out;
}

Encoder Encoder::fit(const Dataset& dataset) {
  if (dataset.empty()) throw PreconditionError("encode: empty dataset");
  Encoder enc;
  enc.schema_ = dataset.schema();
  const auto& cols = dataset.schema().columns;
  for (std::size_t c = 0; c < cols.size(); ++c) {
    ColumnState state;
    state.kind = cols[c].kind;
    if (state.kind == ColumnKind::Categorical) {
      std::set<std::string> levels;
      for (std::size_t r = 0; r < dataset.size(); ++r) {
        const auto& v = dataset.cell(r, c);
        levels.insert(is_missing(v) ? std::string(kMissingLevel) : std::get<std::string>(v));
      }
      state.levels.assign(levels.begin(), levels.end());
      for (const auto& l : state.levels) enc.feature_names_.push_back(cols[c].name + "=" + l);
    } else {
      std::vector<double> present;
      for (std::size_t r = 0; r < dataset.size(); ++r) {
        if (const auto* d = std::get_if<double>(&dataset.cell(r, c))) present.push_back(*d);
      }
      if (present.empty())
        throw PreconditionError("encode: column '" + cols[c].name + "' is entirely missing");
      state.fill = median(std::move(present));
      enc.feature_names_.push_back(cols[c].name);
    }
    enc.columns_.push_back(std::move(state));
  }
  return enc;
}

EncodedMatrix Encoder::transform(const Dataset& dataset) const {
  const auto& cols = dataset.schema().columns;
  if (cols.size() != schema_.columns.size())
    throw PreconditionError("encode: schema mismatch between fit and transform");
  for (std::size_t c = 0; c < cols.size(); ++c) {
    if (cols[c].name != schema_.columns[c].name || cols[c].kind != schema_.columns[c].kind)
      throw PreconditionError("encode: schema mismatch at column '" + cols[c].name + "'");
  }
  EncodedMatrix out;
  out.values = Matrix(dataset.size(), feature_names_.size());
  out.feature_names = feature_names_;
  out.row_index = iota_indices(dataset.size());
  for (std::size_t r = 0; r < dataset.size(); ++r) {
    std::size_t offset = 0;
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const auto& state = columns_[c];
      const auto& v = dataset.cell(r, c);
      if (state.kind == ColumnKind::Categorical) {
        const std::string level = is_missing(v) ? std::string(kMissingLevel) : std::get<std::string>(v);
        auto it = std::lower_bound(state.levels.begin(), state.levels.end(), level);
        if (it == state.levels.end() || *it != level)
          it = std::lower_bound(state.levels.begin(), state.levels.end(), std::string(kMissingLevel));
        if (it != state.levels.end() && (*it == level || *it == kMissingLevel))
          out.values(r, offset + static_cast<std::size_t>(it - state.levels.begin())) = 1.0;
        offset += state.levels.size();
      } else {
        const auto* d = std::get_if<double>(&v);
        out.values(r, offset) = d ? *d : state.fill;
        ++offset;
      }
    }
  }
  return out;
}

EncodedMatrix encode(const Dataset& dataset) { return Encoder::fit(dataset).transform(dataset); }

// ---------------------------------------------------------------------------
// Synthesis

void to_json(nlohmann::json& j, const SynthConfig& c) {
  auto effects = nlohmann::json::array();
  for (const auto& e : c.effects) {
    nlohmann::json ej{{"feature", e.feature}, {"log_effect", e.log_effect}};
    if (e.level) ej["level"] = *e.level;
    if (e.only_above) ej["only_above"] = *e.only_above;
    effects.push_back(std::move(ej));
  }
  j = nlohmann::json{{"n", c.n},
                     {"seed", c.seed},
                     {"mu", c.mu},
                     {"sigma", c.sigma},
                     {"effects", std::move(effects)},
                     {"noise_features", c.noise_features},
                     {"round_to_minutes", c.round_to_minutes},
                     {"short_fraction", c.short_fraction},
                     {"corrupt_fraction", c.corrupt_fraction},
                     {"corrupt_factor", c.corrupt_factor},
                     {"leak_duration", c.leak_duration}};
}

void from_json(const nlohmann::json& j, SynthConfig& c) {
  c = SynthConfig{};
  c.n = j.value("n", c.n);
  c.seed = j.value("seed", c.seed);
  c.mu = j.value("mu", c.mu);
  c.sigma = j.value("sigma", c.sigma);
  c.noise_features = j.value("noise_features", c.noise_features);
  c.round_to_minutes = j.value("round_to_minutes", c.round_to_minutes);
  c.short_fraction = j.value("short_fraction", c.short_fraction);
  c.corrupt_fraction = j.value("corrupt_fraction", c.corrupt_fraction);
  c.corrupt_factor = j.value("corrupt_factor", c.corrupt_factor);
  c.leak_duration = j.value("leak_duration", c.leak_duration);
  if (j.contains("effects")) {
    for (const auto& ej : j.at("effects")) {
      PlantedEffect e;
      e.feature = ej.at("feature").get<std::string>();
      e.log_effect = ej.at("log_effect").get<double>();
      if (ej.contains("level")) e.level = ej.at("level").get<std::string>();
      if (ej.contains("only_above")) e.only_above = ej.at("only_above").get<double>();
      c.effects.push_back(std::move(e));
    }
  }
}

namespace {

struct SynthColumn {
  ColumnSpec spec;
  std::vector<std::string> levels;    // categorical
  std::vector<double> weights;        // categorical level probabilities
  double lo = 0, hi = 0;              // uniform integer numeric
  bool gaussian = false;              // numeric N(0,1)
  double p_true = 0.0;                // boolean
  double mean = 0.0, sd = 1.0;        // standardisation for numeric effects
};

std::vector<SynthColumn> synth_columns(std::size_t noise_features) {
  std::vector<SynthColumn> cols;
  auto uniform_int = [](std::string name, double lo, double hi, std::optional<std::string> unit) {
    SynthColumn c;
    c.spec = {std::move(name), ColumnKind::Numeric, std::move(unit)};
    c.lo = lo;
    c.hi = hi;
    const double k = hi - lo + 1.0;
    c.mean = (lo + hi) / 2.0;
    c.sd = std::sqrt((k * k - 1.0) / 12.0);
    return c;
  };
  auto categorical = [](std::string name, std::vector<std::string> levels, std::vector<double> weights) {
    SynthColumn c;
    c.spec = {std::move(name), ColumnKind::Categorical, std::nullopt};
    c.levels = std::move(levels);
    c.weights = std::move(weights);
    return c;
  };
  auto gaussian = [](std::string name, std::optional<std::string> unit) {
    SynthColumn c;
    c.spec = {std::move(name), ColumnKind::Numeric, std::move(unit)};
    c.gaussian = true;
    return c;
  };
  cols.push_back(uniform_int("hour", 0, 23, "h"));
  cols.push_back(categorical("weekday", {"Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"},
                             {1, 1, 1, 1, 1, 1, 1}));
  cols.push_back(categorical("incident_type", {"breakdown", "crash", "hazard", "fire"}, {0.4, 0.35, 0.2, 0.05}));
  cols.push_back(uniform_int("lanes_affected", 0, 3, std::nullopt));
  cols.push_back(categorical("reported_by", {"camera", "police", "public"}, {0.3, 0.3, 0.4}));
  {
    SynthColumn c;
    c.spec = {"rain", ColumnKind::Boolean, std::nullopt};
    c.p_true = 0.2;
    c.mean = 0.2;
    c.sd = std::sqrt(0.2 * 0.8);
    cols.push_back(std::move(c));
  }
  cols.push_back(gaussian("x_coord", "km"));
  cols.push_back(gaussian("y_coord", "km"));
  for (std::size_t i = 0; i < noise_features; ++i) cols.push_back(gaussian("noise_" + std::to_string(i), std::nullopt));
  return cols;
}

}  // namespace

SynthOutput synthesize_detailed(const SynthConfig& config) {
  if (config.n < 1) throw PreconditionError("synthesize: n must be >= 1");
  if (!(config.sigma > 0.0)) throw PreconditionError("synthesize: sigma must be > 0");
  if (config.short_fraction < 0 || config.short_fraction > 1 || config.corrupt_fraction < 0 ||
      config.corrupt_fraction > 1)
    throw PreconditionError("synthesize: fractions must lie in [0, 1]");

  const auto cols = synth_columns(config.noise_features);
  struct ResolvedEffect {
    std::size_t column;
    const PlantedEffect* effect;
  };
  std::vector<ResolvedEffect> effects;
  for (const auto& e : config.effects) {
    const auto it = std::find_if(cols.begin(), cols.end(), [&](const SynthColumn& c) { return c.spec.name == e.feature; });
    if (it == cols.end()) throw PreconditionError("synthesize: unknown effect feature '" + e.feature + "'");
    if (it->spec.kind == ColumnKind::Categorical && !e.level)
      throw PreconditionError("synthesize: categorical effect on '" + e.feature + "' needs a level");
    effects.push_back({static_cast<std::size_t>(it - cols.begin()), &e});
  }

  Rng features_rng = make_rng(config.seed, {1});
  Rng duration_rng = make_rng(config.seed, {2});
  Rng anomaly_rng = make_rng(config.seed, {3});

  FeatureSchema schema;
  for (const auto& c : cols) schema.columns.push_back(c.spec);
  schema.target_column = "duration";

  std::vector<std::vector<CellValue>> rows(config.n);
  std::vector<double> clean(config.n);
  for (std::size_t r = 0; r < config.n; ++r) {
    auto& row = rows[r];
    row.reserve(cols.size() + 1);
    for (const auto& c : cols) {
      if (c.spec.kind == ColumnKind::Categorical) {
        const double total = std::accumulate(c.weights.begin(), c.weights.end(), 0.0);
        double u = uniform01(features_rng) * total;
        std::size_t pick = 0;
        while (pick + 1 < c.weights.size() && u >= c.weights[pick]) u -= c.weights[pick++];
        row.emplace_back(c.levels[pick]);
      } else if (c.spec.kind == ColumnKind::Boolean) {
        row.emplace_back(uniform01(features_rng) < c.p_true ? 1.0 : 0.0);
      } else if (c.gaussian) {
        row.emplace_back(standard_normal(features_rng));
      } else {
        const auto span = static_cast<std::size_t>(c.hi - c.lo + 1.0);
        row.emplace_back(c.lo + static_cast<double>(uniform_index(features_rng, span)));
      }
    }
    const double base = std::exp(config.mu + config.sigma * standard_normal(duration_rng));
    double log_mult = 0.0;
    for (const auto& re : effects) {
      const auto& e = *re.effect;
      if (e.only_above && !(base > *e.only_above)) continue;
      const auto& c = cols[re.column];
      const auto& v = row[re.column];
      if (c.spec.kind == ColumnKind::Categorical) {
        if (std::get<std::string>(v) == *e.level) log_mult += e.log_effect;
      } else if (c.spec.kind == ColumnKind::Boolean && e.level) {
        const bool want = *e.level == "true" || *e.level == "1";
        if ((std::get<double>(v) != 0.0) == want) log_mult += e.log_effect;
      } else {
        log_mult += e.log_effect * (std::get<double>(v) - c.mean) / c.sd;
      }
    }
    double d = base * std::exp(log_mult);
    if (config.round_to_minutes) d = std::round(d);
    clean[r] = d;
  }

  std::vector<double> durations = clean;
  std::vector<std::size_t> corrupted;
  for (std::size_t r = 0; r < config.n; ++r) {
    const double u_short = uniform01(anomaly_rng);
    const double u_corrupt = uniform01(anomaly_rng);
    const double u_value = uniform01(anomaly_rng);
    if (u_short < config.short_fraction) {
      durations[r] = u_value < 0.5 ? 0.0 : 1.0;
    } else if (u_corrupt < config.corrupt_fraction) {
      double d = durations[r] * config.corrupt_factor;
      if (config.round_to_minutes) d = std::round(d);
      durations[r] = d;
      corrupted.push_back(r);
    }
  }
  if (config.leak_duration) {
    schema.columns.push_back({"leaked_duration", ColumnKind::Numeric, "min"});
    for (std::size_t r = 0; r < config.n; ++r) rows[r].emplace_back(durations[r]);
  }
  return {Dataset(std::move(schema), std::move(rows), std::move(durations)), std::move(clean), std::move(corrupted)};
}

Dataset synthesize(const SynthConfig& config) { return synthesize_detailed(config).dataset; }

}  // namespace ieo
