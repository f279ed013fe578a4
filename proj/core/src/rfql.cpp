#include "ramp/rfql.hpp"

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <set>
#include <sstream>

namespace ramp::rfql {

namespace pt = boost::property_tree;

namespace {

constexpr const char* kTermOrder[] = {
    "CPUHourCost", "EndDate",        "EndTime",        "StartDate",          "StartTime",  "OperatingSystem",
    "OSVersion",   "Architecture",   "CPUSpeed",       "WallTime",           "TotalDiskSpace", "NodeDiskSpace",
    "InterNodeBandwidth", "RAMPerCore", "TotalCores",  "NodeCount",          "NodeCores"};

bool is_term(const std::string& name) {
  for (const char* t : kTermOrder) {
    if (name == t) return true;
  }
  return false;
}

std::int64_t parse_int(const std::string& term, const std::string& text) {
  std::int64_t v = 0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || text.empty()) {
    throw ParseError(fmt::format("{}: expected an integer, got '{}'", term, text));
  }
  return v;
}

double parse_double(const std::string& term, const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ParseError(fmt::format("{}: expected a number, got '{}'", term, text));
  }
}

std::string format_double(double v) { return fmt::format("{}", v); }

void check_positive(std::vector<Violation>& out, int idx, const char* term,
                    const std::optional<std::int64_t>& v) {
  if (v && *v <= 0) out.push_back({idx, term, kNotPositive});
}

void check_non_negative(std::vector<Violation>& out, int idx, const char* term,
                        const std::optional<std::int64_t>& v) {
  if (v && *v < 0) out.push_back({idx, term, kNegative});
}

}  // namespace

std::int64_t RfqRequest::requested_cores() const {
  if (total_cores) return *total_cores;
  if (node_count && node_cores) return *node_count * *node_cores;
  return 0;
}

ValidationError::ValidationError(std::vector<Violation> violations)
    : Error([&] {
        std::string msg = "RFQL validation failed:";
        for (const auto& v : violations) {
          msg += fmt::format(" [request {}] {}: {};", v.request_index, v.term, v.message);
        }
        return msg;
      }()),
      violations_(std::move(violations)) {}

std::vector<Violation> validate_request(const RfqRequest& r) {
  std::vector<Violation> out;
  const int i = r.index;

  if (!r.cpu_hour_cost) {
    out.push_back({i, "CPUHourCost", kRequiredAbsent});
  } else if (r.cpu_hour_cost->cents() <= 0) {
    out.push_back({i, "CPUHourCost", kNotPositive});
  }
  if (!r.deadline) out.push_back({i, "EndDate", kRequiredAbsent});
  if (!r.wall_time) {
    out.push_back({i, "WallTime", kRequiredAbsent});
  } else {
    check_positive(out, i, "WallTime", r.wall_time);
  }

  const bool node_form = r.node_count || r.node_cores;
  if (r.total_cores && node_form) {
    out.push_back({i, "TotalCores", kMutuallyExclusive});
  } else if (!r.total_cores && !node_form) {
    out.push_back({i, "TotalCores", kRequiredAbsent});
  } else if (node_form && !(r.node_count && r.node_cores)) {
    out.push_back({i, r.node_count ? "NodeCores" : "NodeCount", kIncomplete});
  }
  check_positive(out, i, "TotalCores", r.total_cores);
  check_positive(out, i, "NodeCount", r.node_count);
  check_positive(out, i, "NodeCores", r.node_cores);

  if (r.total_disk_space && r.node_disk_space) {
    out.push_back({i, "TotalDiskSpace", kMutuallyExclusive});
  }
  check_non_negative(out, i, "TotalDiskSpace", r.total_disk_space);
  check_non_negative(out, i, "NodeDiskSpace", r.node_disk_space);
  check_non_negative(out, i, "InterNodeBandwidth", r.inter_node_bandwidth);
  check_non_negative(out, i, "RAMPerCore", r.ram_per_core);
  if (r.cpu_speed && *r.cpu_speed < 0) out.push_back({i, "CPUSpeed", kNegative});

  if (r.deadline && r.earliest_start) {
    const auto window = (*r.deadline - *r.earliest_start).count();
    const std::int64_t need = (r.wall_time && *r.wall_time > 0) ? *r.wall_time : 0;
    if (window <= 0 || window < need) out.push_back({i, "EndDate", kWindow});
  }
  return out;
}

std::vector<Violation> validate_rfq(const RfqDocument& doc) {
  std::vector<Violation> out;
  if (doc.requests.empty()) out.push_back({-1, "RFQL", kEmptyDocument});
  std::set<int> seen;
  for (const auto& r : doc.requests) {
    if (!seen.insert(r.index).second) out.push_back({r.index, "Request", kDuplicateIndex});
    auto v = validate_request(r);
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

namespace {

RfqRequest read_request(const pt::ptree& node, int index, std::vector<Violation>& violations) {
  RfqRequest r;
  r.index = index;
  std::optional<CalendarTime> end_date, start_date;
  std::optional<Seconds> end_time, start_time;
  std::set<std::string> seen;

  for (const auto& [name, child] : node) {
    if (name == "<xmlattr>" || name == "<xmlcomment>") continue;
    if (!is_term(name)) throw ParseError(fmt::format("Request {}: unknown term <{}>", index, name));
    if (!seen.insert(name).second) {
      throw ParseError(fmt::format("Request {}: term <{}> appears twice", index, name));
    }
    const std::string text = child.get_value<std::string>();
    if (name == "CPUHourCost") {
      r.cpu_hour_cost = Money::parse(text);
    } else if (name == "EndDate") {
      end_date = parse_iso_date(text);
    } else if (name == "EndTime") {
      end_time = parse_iso_time_of_day(text);
    } else if (name == "StartDate") {
      start_date = parse_iso_date(text);
    } else if (name == "StartTime") {
      start_time = parse_iso_time_of_day(text);
    } else if (name == "OperatingSystem") {
      r.operating_system = text;
    } else if (name == "OSVersion") {
      r.os_version = text;
    } else if (name == "Architecture") {
      r.architecture = text;
    } else if (name == "CPUSpeed") {
      r.cpu_speed = parse_double(name, text);
    } else if (name == "WallTime") {
      r.wall_time = parse_int(name, text);
    } else if (name == "TotalDiskSpace") {
      r.total_disk_space = parse_int(name, text);
    } else if (name == "NodeDiskSpace") {
      r.node_disk_space = parse_int(name, text);
    } else if (name == "InterNodeBandwidth") {
      r.inter_node_bandwidth = parse_int(name, text);
    } else if (name == "RAMPerCore") {
      r.ram_per_core = parse_int(name, text);
    } else if (name == "TotalCores") {
      r.total_cores = parse_int(name, text);
    } else if (name == "NodeCount") {
      r.node_count = parse_int(name, text);
    } else if (name == "NodeCores") {
      r.node_cores = parse_int(name, text);
    }
  }

  if (end_date && end_time) {
    r.deadline = *end_date + *end_time;
  } else if (end_date || end_time) {
    violations.push_back({index, end_date ? "EndTime" : "EndDate", kRequiredAbsent});
  }
  if (start_date && start_time) {
    r.earliest_start = *start_date + *start_time;
  } else if (start_date || start_time) {
    violations.push_back({index, start_date ? "StartTime" : "StartDate", kIncomplete});
  }
  return r;
}

}  // namespace

RfqDocument parse_rfq(const std::string& xml) {
  pt::ptree tree;
  std::istringstream in(xml);
  try {
    pt::read_xml(in, tree, pt::xml_parser::trim_whitespace | pt::xml_parser::no_comments);
  } catch (const pt::xml_parser_error& e) {
    throw ParseError("malformed XML: " + e.message(), static_cast<int>(e.line()));
  }

  const auto root = tree.get_child_optional("RFQL");
  if (!root || tree.size() != 1) throw ParseError("root element must be <RFQL>");

  RfqDocument doc;
  doc.document_id = root->get<std::string>("<xmlattr>.id", "");
  std::vector<Violation> violations;
  int position = 0;
  for (const auto& [name, child] : *root) {
    if (name == "<xmlattr>" || name == "<xmlcomment>") continue;
    if (name != "Request") throw ParseError("unexpected element <" + name + "> under <RFQL>");
    const auto id_text = child.get_optional<std::string>("<xmlattr>.id");
    const int index = id_text ? static_cast<int>(parse_int("Request id", *id_text)) : position;
    auto r = read_request(child, index, violations);
    doc.requests.push_back(std::move(r));
    ++position;
  }

  auto v = validate_rfq(doc);
  // Pair-level problems already reported precisely; drop the coarser duplicates.
  for (auto& item : v) {
    const bool dup = std::any_of(violations.begin(), violations.end(), [&](const Violation& p) {
      return p.request_index == item.request_index &&
             (p.term == "EndTime" || p.term == "EndDate") && item.term == "EndDate" &&
             item.message == kRequiredAbsent;
    });
    if (!dup) violations.push_back(std::move(item));
  }
  if (!violations.empty()) throw ValidationError(std::move(violations));
  return doc;
}

std::string serialize_rfq(const RfqDocument& doc) {
  std::string out = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += fmt::format("<RFQL id=\"{}\">\n", doc.document_id);
  auto term = [&](const char* name, const std::string& value) {
    out += fmt::format("    <{0}>{1}</{0}>\n", name, value);
  };
  auto escape = [](const std::string& s) {
    std::string e;
    for (char c : s) {
      switch (c) {
        case '&': e += "&amp;"; break;
        case '<': e += "&lt;"; break;
        case '>': e += "&gt;"; break;
        default: e += c;
      }
    }
    return e;
  };
  for (const auto& r : doc.requests) {
    out += fmt::format("  <Request id=\"{}\">\n", r.index);
    if (r.cpu_hour_cost) term("CPUHourCost", r.cpu_hour_cost->to_string());
    if (r.deadline) {
      term("EndDate", format_iso_date(*r.deadline));
      term("EndTime", format_iso_time_of_day(*r.deadline));
    }
    if (r.earliest_start) {
      term("StartDate", format_iso_date(*r.earliest_start));
      term("StartTime", format_iso_time_of_day(*r.earliest_start));
    }
    if (r.operating_system) term("OperatingSystem", escape(*r.operating_system));
    if (r.os_version) term("OSVersion", escape(*r.os_version));
    if (r.architecture) term("Architecture", escape(*r.architecture));
    if (r.cpu_speed) term("CPUSpeed", format_double(*r.cpu_speed));
    if (r.wall_time) term("WallTime", std::to_string(*r.wall_time));
    if (r.total_disk_space) term("TotalDiskSpace", std::to_string(*r.total_disk_space));
    if (r.node_disk_space) term("NodeDiskSpace", std::to_string(*r.node_disk_space));
    if (r.inter_node_bandwidth) term("InterNodeBandwidth", std::to_string(*r.inter_node_bandwidth));
    if (r.ram_per_core) term("RAMPerCore", std::to_string(*r.ram_per_core));
    if (r.total_cores) term("TotalCores", std::to_string(*r.total_cores));
    if (r.node_count) term("NodeCount", std::to_string(*r.node_count));
    if (r.node_cores) term("NodeCores", std::to_string(*r.node_cores));
    out += "  </Request>\n";
  }
  out += "</RFQL>\n";
  return out;
}

bool match_static(const ResourceProfile& p, const RfqRequest& r) {
  if (r.operating_system && *r.operating_system != p.operating_system) return false;
  if (r.os_version && *r.os_version != p.os_version) return false;
  if (r.architecture && *r.architecture != p.architecture) return false;
  if (r.cpu_speed && p.cpu_speed < *r.cpu_speed) return false;
  if (r.ram_per_core && p.ram_per_core < *r.ram_per_core) return false;
  if (r.inter_node_bandwidth && p.inter_node_bandwidth < *r.inter_node_bandwidth) return false;
  if (r.node_disk_space && p.node_disk_space < *r.node_disk_space) return false;
  if (r.total_disk_space) {
    const std::int64_t total = std::max(p.total_disk_space, p.node_disk_space * p.node_count);
    if (total < *r.total_disk_space) return false;
  }
  if (r.total_cores) return *r.total_cores <= p.total_cores();
  if (r.node_count && r.node_cores) {
    // No splitting a requested node across several physical nodes.
    return *r.node_count <= p.node_count && *r.node_cores <= p.node_cores;
  }
  return true;
}

std::optional<CalendarTime> latest_start(const RfqRequest& r) {
  if (!r.deadline || !r.wall_time) return std::nullopt;
  return *r.deadline - Seconds(*r.wall_time);
}

nlohmann::json request_to_json(const RfqRequest& r) {
  nlohmann::json j = nlohmann::json::object();
  j["index"] = r.index;
  if (r.cpu_hour_cost) j["CPUHourCost"] = r.cpu_hour_cost->to_double();
  if (r.deadline) {
    j["EndDate"] = format_iso_date(*r.deadline);
    j["EndTime"] = format_iso_time_of_day(*r.deadline);
  }
  if (r.earliest_start) {
    j["StartDate"] = format_iso_date(*r.earliest_start);
    j["StartTime"] = format_iso_time_of_day(*r.earliest_start);
  }
  if (r.operating_system) j["OperatingSystem"] = *r.operating_system;
  if (r.os_version) j["OSVersion"] = *r.os_version;
  if (r.architecture) j["Architecture"] = *r.architecture;
  if (r.cpu_speed) j["CPUSpeed"] = *r.cpu_speed;
  if (r.wall_time) j["WallTime"] = *r.wall_time;
  if (r.total_disk_space) j["TotalDiskSpace"] = *r.total_disk_space;
  if (r.node_disk_space) j["NodeDiskSpace"] = *r.node_disk_space;
  if (r.inter_node_bandwidth) j["InterNodeBandwidth"] = *r.inter_node_bandwidth;
  if (r.ram_per_core) j["RAMPerCore"] = *r.ram_per_core;
  if (r.total_cores) j["TotalCores"] = *r.total_cores;
  if (r.node_count) j["NodeCount"] = *r.node_count;
  if (r.node_cores) j["NodeCores"] = *r.node_cores;
  return j;
}

RfqRequest request_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParseError("request must be a JSON object");
  RfqRequest r;
  r.index = j.value("index", 0);
  auto opt_int = [&](const char* key, std::optional<std::int64_t>& dst) {
    if (j.contains(key)) dst = j.at(key).get<std::int64_t>();
  };
  auto opt_str = [&](const char* key, std::optional<std::string>& dst) {
    if (j.contains(key)) dst = j.at(key).get<std::string>();
  };
  if (j.contains("CPUHourCost")) r.cpu_hour_cost = Money::from_double(j.at("CPUHourCost").get<double>());
  if (j.contains("EndDate")) {
    r.deadline = parse_iso_date(j.at("EndDate").get<std::string>()) +
                 parse_iso_time_of_day(j.value("EndTime", std::string("00:00:00Z")));
  }
  if (j.contains("StartDate")) {
    r.earliest_start = parse_iso_date(j.at("StartDate").get<std::string>()) +
                       parse_iso_time_of_day(j.value("StartTime", std::string("00:00:00Z")));
  }
  opt_str("OperatingSystem", r.operating_system);
  opt_str("OSVersion", r.os_version);
  opt_str("Architecture", r.architecture);
  if (j.contains("CPUSpeed")) r.cpu_speed = j.at("CPUSpeed").get<double>();
  opt_int("WallTime", r.wall_time);
  opt_int("TotalDiskSpace", r.total_disk_space);
  opt_int("NodeDiskSpace", r.node_disk_space);
  opt_int("InterNodeBandwidth", r.inter_node_bandwidth);
  opt_int("RAMPerCore", r.ram_per_core);
  opt_int("TotalCores", r.total_cores);
  opt_int("NodeCount", r.node_count);
  opt_int("NodeCores", r.node_cores);
  return r;
}

ResourceProfile profile_from_json(const nlohmann::json& j) {
  ResourceProfile p;
  p.operating_system = j.value("operating_system", std::string());
  p.os_version = j.value("os_version", std::string());
  p.architecture = j.value("architecture", std::string());
  p.cpu_speed = j.value("cpu_speed", 0.0);
  p.ram_per_core = j.value("ram_per_core", std::int64_t{0});
  p.node_disk_space = j.value("node_disk_space", std::int64_t{0});
  p.total_disk_space = j.value("total_disk_space", std::int64_t{0});
  p.inter_node_bandwidth = j.value("inter_node_bandwidth", std::int64_t{0});
  p.node_count = j.value("node_count", std::int64_t{0});
  p.node_cores = j.value("node_cores", std::int64_t{0});
  if (p.node_count < 0 || p.node_cores < 0 || p.ram_per_core < 0 || p.cpu_speed < 0 ||
      p.node_disk_space < 0 || p.total_disk_space < 0 || p.inter_node_bandwidth < 0) {
    throw ConfigError("resource profile capacities must be >= 0");
  }
  return p;
}

nlohmann::json profile_to_json(const ResourceProfile& p) {
  return {{"operating_system", p.operating_system},
          {"os_version", p.os_version},
          {"architecture", p.architecture},
          {"cpu_speed", p.cpu_speed},
          {"ram_per_core", p.ram_per_core},
          {"node_disk_space", p.node_disk_space},
          {"total_disk_space", p.total_disk_space},
          {"inter_node_bandwidth", p.inter_node_bandwidth},
          {"node_count", p.node_count},
          {"node_cores", p.node_cores}};
}

}  // namespace ramp::rfql
