#include "mind/cli_io/dataset_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "mind/diffcore/error.hpp"

namespace mind {

using nlohmann::json;

namespace {

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_number(std::string_view s, std::size_t line, std::string_view column) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  require(res.ec == std::errc() && res.ptr == s.data() + s.size() && !s.empty(), ErrorCode::parse,
          "line " + std::to_string(line) + ", column '" + std::string(column) + "': '" + std::string(s) +
              "' is not a number");
  require(std::isfinite(v), ErrorCode::parse,
          "line " + std::to_string(line) + ", column '" + std::string(column) + "': non-finite value");
  return v;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::io, "cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void check_name(const std::string& s, const char* what) {
  require(!s.empty() && s.find_first_of(",\"\n\r") == std::string::npos, ErrorCode::invalid_argument,
          std::string(what) + " '" + s + "' must be nonempty and free of commas, quotes and newlines");
}

}  // namespace

std::string default_sidecar_path(const std::string& csv_path) {
  const std::string stem = csv_path.size() > 4 && csv_path.ends_with(".csv") ? csv_path.substr(0, csv_path.size() - 4)
                                                                            : csv_path;
  return stem + ".splits.json";
}

void save_dataset(const Dataset& data, const std::vector<std::string>& feature_names, const std::string& csv_path,
                  std::string sidecar_path, const std::vector<double>& timestamps) {
  data.validate();
  require(data.size() > 0, ErrorCode::invalid_argument, "save_dataset: empty dataset");
  const std::size_t d = data.features(), t = data.timesteps();
  require(feature_names.size() == d, ErrorCode::invalid_argument,
          "save_dataset: " + std::to_string(feature_names.size()) + " names for " + std::to_string(d) + " features");
  for (const auto& n : feature_names) check_name(n, "feature name");
  std::vector<double> grid = timestamps;
  if (t > 0 && grid.empty()) {
    for (std::size_t s = 0; s < t; ++s) grid.push_back(static_cast<double>(s));
  }
  require(grid.size() == t, ErrorCode::invalid_argument, "save_dataset: timestamp grid does not match T");
  std::vector<std::string> ids = data.ids;
  if (ids.empty()) {
    for (std::size_t i = 0; i < data.size(); ++i) ids.push_back("i" + std::to_string(i));
  }
  for (const auto& id : ids) check_name(id, "instance id");

  std::ostringstream out;
  out << "instance_id";
  if (t > 0) out << ",timestamp";
  for (const auto& n : feature_names) out << ',' << n;
  out << ",label\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Tensor& x = data.instances[i];
    for (std::size_t s = 0; s < std::max<std::size_t>(t, 1); ++s) {
      out << ids[i];
      if (t > 0) out << ',' << format_number(grid[s]);
      for (std::size_t j = 0; j < d; ++j) out << ',' << format_number(t > 0 ? x[j * t + s] : x[j]);
      out << ',' << format_number(data.labels[i]) << '\n';
    }
  }
  std::ofstream csv(csv_path, std::ios::binary);
  require(static_cast<bool>(csv), ErrorCode::io, "cannot write '" + csv_path + "'");
  csv << out.str();

  json splits = {{"train", json::array()}, {"validation", json::array()}, {"test", json::array()}};
  for (std::size_t i = 0; i < data.size(); ++i) splits[std::string(to_string(data.splits[i]))].push_back(ids[i]);
  if (sidecar_path.empty()) sidecar_path = default_sidecar_path(csv_path);
  std::ofstream side(sidecar_path, std::ios::binary);
  require(static_cast<bool>(side), ErrorCode::io, "cannot write '" + sidecar_path + "'");
  side << json{{"format", "mind-splits"}, {"schema_version", 1}, {"splits", splits}}.dump(2) << '\n';
}

DatasetFile load_dataset(const std::string& csv_path, std::string sidecar_path, bool normalize) {
  const std::string text = read_file(csv_path);
  std::vector<std::string_view> lines;
  {
    std::string_view rest(text);
    while (!rest.empty()) {
      const std::size_t nl = rest.find('\n');
      std::string_view line = rest.substr(0, nl);
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      lines.push_back(line);
      if (nl == std::string_view::npos) break;
      rest.remove_prefix(nl + 1);
    }
    while (!lines.empty() && lines.back().empty()) lines.pop_back();
  }
  require(!lines.empty(), ErrorCode::parse, "'" + csv_path + "' is empty");
  const auto header = split_fields(lines[0]);
  require(header.size() >= 3 && header.front() == "instance_id" && header.back() == "label", ErrorCode::parse,
          "header must be instance_id[,timestamp],<features...>,label");
  const bool series = header[1] == "timestamp";
  const std::size_t first = series ? 2 : 1;
  require(header.size() > first + 1, ErrorCode::parse, "header names no feature columns");
  DatasetFile file;
  for (std::size_t c = first; c + 1 < header.size(); ++c) file.feature_names.emplace_back(header[c]);
  const std::size_t d = file.feature_names.size();

  struct Pending {
    double label = 0.0;
    std::map<double, std::vector<double>> rows;  // timestamp -> features
  };
  std::vector<std::string> order;
  std::unordered_map<std::string, Pending> pending;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    const std::size_t line_no = ln + 1;
    const auto f = split_fields(lines[ln]);
    require(f.size() == header.size(), ErrorCode::parse,
            "line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) + " fields, got " +
                std::to_string(f.size()));
    const std::string id(f[0]);
    require(!id.empty(), ErrorCode::parse, "line " + std::to_string(line_no) + ": empty instance_id");
    const double label = parse_number(f.back(), line_no, "label");
    const double ts = series ? parse_number(f[1], line_no, "timestamp") : 0.0;
    std::vector<double> values(d);
    for (std::size_t j = 0; j < d; ++j) values[j] = parse_number(f[first + j], line_no, file.feature_names[j]);
    auto [it, fresh] = pending.try_emplace(id);
    if (fresh) {
      order.push_back(id);
      it->second.label = label;
    } else {
      require(it->second.label == label, ErrorCode::parse,
              "line " + std::to_string(line_no) + ": instance '" + id + "' has conflicting labels");
      require(series, ErrorCode::parse, "line " + std::to_string(line_no) + ": duplicate instance_id '" + id + "'");
    }
    require(it->second.rows.emplace(ts, std::move(values)).second, ErrorCode::parse,
            "line " + std::to_string(line_no) + ": instance '" + id + "' repeats timestamp " + format_number(ts));
  }
  require(!order.empty(), ErrorCode::parse, "'" + csv_path + "' has no data rows");

  const Pending& first_inst = pending.at(order.front());
  if (series) {
    for (const auto& [ts, v] : first_inst.rows) file.timestamps.push_back(ts);
  }
  const std::size_t t = file.timestamps.size();
  Dataset& data = file.data;
  for (const std::string& id : order) {
    const Pending& p = pending.at(id);
    if (series) {
      std::vector<double> grid;
      for (const auto& [ts, v] : p.rows) grid.push_back(ts);
      require(grid == file.timestamps, ErrorCode::parse,
              "instance '" + id + "' has " + std::to_string(grid.size()) + " timestamps that differ from the " +
                  std::to_string(t) + " of instance '" + order.front() + "'");
    }
    Tensor x = series ? Tensor::zeros({d, t}) : Tensor::zeros({d});
    std::size_t s = 0;
    for (const auto& [ts, v] : p.rows) {
      for (std::size_t j = 0; j < d; ++j) x[series ? j * t + s : j] = v[j];
      ++s;
    }
    data.instances.push_back(std::move(x));
    data.labels.push_back(p.label);
    data.ids.push_back(id);
  }

  if (sidecar_path.empty()) sidecar_path = default_sidecar_path(csv_path);
  std::unordered_map<std::string, Split> assigned;
  try {
    const json side = json::parse(read_file(sidecar_path));
    require(side.at("format") == "mind-splits", ErrorCode::parse, "'" + sidecar_path + "' is not a split sidecar");
    require(side.at("schema_version") == 1, ErrorCode::parse, "unsupported split sidecar version");
    for (const auto& [name, ids] : side.at("splits").items()) {
      const Split split = parse_split(name);
      for (const auto& v : ids) {
        const std::string id = v.get<std::string>();
        require(pending.contains(id), ErrorCode::parse, "split sidecar names unknown instance '" + id + "'");
        require(assigned.emplace(id, split).second, ErrorCode::parse,
                "instance '" + id + "' appears in more than one split");
      }
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::parse, "malformed split sidecar '" + sidecar_path + "': " + e.what());
  }
  for (const std::string& id : order) {
    const auto it = assigned.find(id);
    require(it != assigned.end(), ErrorCode::parse, "instance '" + id + "' is missing from the split sidecar");
    data.splits.push_back(it->second);
  }
  data.validate();
  if (normalize) {
    require(!data.indices(Split::train).empty(), ErrorCode::precondition,
            "cannot normalize without a training split");
    file.stats = normalize_features(data);
    file.normalized = true;
  }
  return file;
}

}  // namespace mind
