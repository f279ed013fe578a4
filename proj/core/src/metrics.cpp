#include "ramp/metrics.hpp"

#include "ramp/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>

namespace ramp::harness {

using nlohmann::json;

namespace {

std::string auction_of(const std::string& conversation) { return conversation.substr(0, conversation.rfind('#')); }

// Wire messages carry prices as numbers, transcript records as strings.
Money money_of(const json& j) {
  if (j.is_string()) return Money::parse(j.get<std::string>());
  return Money::from_double(j.get<double>());
}

std::string fmt_double(double v) { return fmt::format("{:.4f}", v); }

}  // namespace

std::optional<double> AuctionMetrics::winning_price() const {
  double sum = 0;
  int n = 0;
  for (const auto& u : unit_outcomes) {
    if (u.status == "confirmed" && u.price) {
      sum += u.price->to_double();
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

std::string AuctionMetrics::winner() const {
  for (const auto& u : unit_outcomes)
    if (u.unit == 0 && u.status == "confirmed") return u.resource;
  return {};
}

Metrics compute_metrics(const std::vector<json>& records) {
  Metrics m;
  std::map<std::string, AuctionMetrics> auctions;
  std::vector<std::string> order;
  std::map<std::string, Money> original_price;

  for (const auto& r : records) {
    const auto kind = r.value("kind", "");
    if (kind == "auction_started") {
      AuctionMetrics a;
      a.auction_id = r.at("auction_id").get<std::string>();
      a.user = r.value("agent", "");
      a.units = r.value("units", 1);
      a.rounds = r.value("rounds", 1);
      a.request_price = money_of(r.value("request_price", json("0")));
      original_price[a.auction_id] = a.request_price;
      if (!auctions.count(a.auction_id)) order.push_back(a.auction_id);
      auctions[a.auction_id] = a;
    } else if (kind == "round_closed") {
      auto it = auctions.find(r.at("auction_id").get<std::string>());
      if (it == auctions.end()) continue;
      auto& a = it->second;
      const int round = r.at("round").get<int>();
      auto rs = std::find_if(a.round_stats.begin(), a.round_stats.end(),
                             [&](const RoundMetrics& x) { return x.round == round; });
      if (rs == a.round_stats.end()) {
        a.round_stats.push_back(RoundMetrics{round, money_of(r.at("request_price")), 0, {}, {}});
        rs = a.round_stats.end() - 1;
      }
      double sum = rs->mean_offer.value_or(0) * rs->offers;
      for (const auto& o : r.at("offers")) {
        if (!o.value("meets_requirements", true)) continue;
        sum += money_of(o.at("price")).to_double();
        ++rs->offers;
      }
      if (rs->offers > 0) rs->mean_offer = sum / rs->offers;
      if (r.contains("last_response_at")) {
        const Millis span(r.at("last_response_at").get<std::int64_t>() - r.at("opened_at").get<std::int64_t>());
        rs->response_span = rs->response_span ? std::max(*rs->response_span, span) : span;
      }
    } else if (kind == "auction_finished") {
      auto it = auctions.find(r.at("auction_id").get<std::string>());
      if (it == auctions.end()) continue;
      auto& a = it->second;
      a.complete = true;
      a.outcome = r.at("outcome").get<std::string>();
      const auto started = r.at("started_at").get<std::int64_t>();
      const auto finished = r.at("finished_at").get<std::int64_t>();
      a.total = Millis(finished - started);
      if (r.contains("bidding_closed_at")) a.finalize = Millis(finished - r.at("bidding_closed_at").get<std::int64_t>());
      for (const auto& u : r.at("units")) {
        UnitOutcome uo;
        uo.unit = u.at("unit").get<int>();
        uo.status = u.at("status").get<std::string>();
        uo.resource = u.value("resource", "");
        if (u.contains("price")) uo.price = money_of(u.at("price"));
        a.unit_outcomes.push_back(uo);
      }
    } else if (kind == "offer") {
      OfferSample s;
      s.t = from_epoch_ms(r.value("t", std::int64_t{0}));
      s.resource = r.value("agent", "");
      s.auction_id = auction_of(r.value("conversation", ""));
      s.unit = r.value("unit", 0);
      s.round = r.value("round", 0);
      s.requested = money_of(r.at("requested"));
      s.price = money_of(r.at("price"));
      s.min_price = money_of(r.value("min_price", json("0")));
      s.attractiveness = money_of(r.value("attractiveness", json("0")));
      s.load = r.value("load", 0.0);
      s.meets_requirements = r.value("meets_requirements", true);
      m.offers.push_back(s);
    } else if (kind == "response") {
      m.responses.push_back({r.value("agent", ""), r.value("resource", ""), r.at("response_ms").get<double>()});
    }
  }
  for (const auto& id : order) {
    auto& a = auctions.at(id);
    std::sort(a.round_stats.begin(), a.round_stats.end(),
              [](const RoundMetrics& x, const RoundMetrics& y) { return x.round < y.round; });
    if (!a.complete) ++m.incomplete;
    m.auctions.push_back(std::move(a));
  }
  return m;
}

std::optional<double> Metrics::median_offer_ratio() const {
  std::map<std::string, Money> original;
  for (const auto& a : auctions) original[a.auction_id] = a.request_price;
  std::vector<double> ratios;
  for (const auto& o : offers) {
    auto it = original.find(o.auction_id);
    if (!o.meets_requirements || it == original.end() || it->second <= Money{}) continue;
    ratios.push_back(o.price.to_double() / it->second.to_double());
  }
  if (ratios.empty()) return std::nullopt;
  std::sort(ratios.begin(), ratios.end());
  const auto n = ratios.size();
  return n % 2 ? ratios[n / 2] : (ratios[n / 2 - 1] + ratios[n / 2]) / 2;
}

std::vector<RoundsRow> Metrics::by_rounds() const {
  std::map<int, RoundsRow> rows;
  std::map<int, int> priced;
  for (const auto& a : auctions) {
    if (!a.complete) continue;
    auto& row = rows[a.rounds];
    row.rounds = a.rounds;
    row.mean_duration_s += static_cast<double>(a.total.count()) / 1000.0;
    ++row.auctions;
    if (auto p = a.winning_price()) {
      row.mean_sale_price += *p;
      ++priced[a.rounds];
    }
  }
  std::vector<RoundsRow> out;
  for (auto& [n, row] : rows) {
    row.mean_duration_s /= row.auctions;
    if (priced[n] > 0) row.mean_sale_price /= priced[n];
    out.push_back(row);
  }
  return out;
}

std::map<std::string, int> Metrics::winner_counts() const {
  std::map<std::string, int> counts;
  for (const auto& a : auctions) {
    if (!a.complete) continue;
    for (const auto& u : a.unit_outcomes)
      if (u.status == "confirmed") ++counts[u.resource];
  }
  return counts;
}

std::optional<double> Metrics::mean_response_ms() const {
  if (responses.empty()) return std::nullopt;
  double sum = 0;
  for (const auto& r : responses) sum += r.ms;
  return sum / static_cast<double>(responses.size());
}

std::vector<json> read_transcripts(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw ConfigError("not a directory: " + dir);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".jsonl") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<json> records;
  for (const auto& f : files) {
    std::ifstream in(f);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto j = json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.is_object()) continue;
      records.push_back(std::move(j));
    }
  }
  std::stable_sort(records.begin(), records.end(), [](const json& a, const json& b) {
    return a.value("t", std::int64_t{0}) < b.value("t", std::int64_t{0});
  });
  return records;
}

std::vector<std::string> write_csvs(const Metrics& m, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::vector<std::string> written;
  auto open = [&](const std::string& name) {
    written.push_back(name);
    std::ofstream out(fs::path(dir) / name);
    if (!out) throw ConfigError("cannot write " + name);
    return out;
  };

  {
    auto out = open("round_prices.csv");
    out << "auction_id,round,request_price,mean_offer,offers,winning_price\n";
    for (const auto& a : m.auctions) {
      if (!a.complete) continue;
      const auto win = a.winning_price();
      for (const auto& r : a.round_stats) {
        out << a.auction_id << ',' << r.round << ',' << r.request_price.to_string() << ','
            << (r.mean_offer ? fmt_double(*r.mean_offer) : "") << ',' << r.offers << ','
            << (win ? fmt_double(*win) : "") << '\n';
      }
    }
  }
  {
    auto out = open("winner_shares.csv");
    out << "resource,wins,share\n";
    const auto counts = m.winner_counts();
    int total = 0;
    for (const auto& [_, c] : counts) total += c;
    for (const auto& [r, c] : counts) out << r << ',' << c << ',' << fmt_double(double(c) / total) << '\n';
  }
  {
    auto out = open("attractiveness.csv");
    out << "t_ms,resource,attractiveness,load\n";
    for (const auto& o : m.offers) {
      out << to_epoch_ms(o.t) << ',' << o.resource << ',' << o.attractiveness.to_string() << ',' << fmt_double(o.load)
          << '\n';
    }
  }
  {
    auto out = open("spot_prices.csv");
    out << "t_ms,resource,auction_id,round,requested,price,meets_requirements\n";
    for (const auto& o : m.offers) {
      out << to_epoch_ms(o.t) << ',' << o.resource << ',' << o.auction_id << ',' << o.round << ','
          << o.requested.to_string() << ',' << o.price.to_string() << ',' << (o.meets_requirements ? 1 : 0) << '\n';
    }
  }
  {
    auto out = open("rounds_table.csv");
    out << "rounds,mean_sale_price,mean_duration_s,auctions\n";
    for (const auto& r : m.by_rounds()) {
      out << r.rounds << ',' << fmt::format("{:.2f}", r.mean_sale_price) << ','
          << fmt::format("{:.2f}", r.mean_duration_s) << ',' << r.auctions << '\n';
    }
  }
  {
    auto out = open("units_duration.csv");
    out << "units,mean_round_span_s,mean_finalize_s,auctions\n";
    std::map<int, std::tuple<double, double, int>> rows;
    for (const auto& a : m.auctions) {
      if (!a.complete) continue;
      double span = 0;
      int n = 0;
      for (const auto& r : a.round_stats) {
        if (r.response_span) {
          span += static_cast<double>(r.response_span->count()) / 1000.0;
          ++n;
        }
      }
      auto& [s, f, c] = rows[a.units];
      s += n ? span / n : 0;
      f += static_cast<double>(a.finalize.count()) / 1000.0;
      ++c;
    }
    for (const auto& [u, row] : rows) {
      const auto& [s, f, c] = row;
      out << u << ',' << fmt_double(s / c) << ',' << fmt_double(f / c) << ',' << c << '\n';
    }
  }
  {
    auto out = open("users_response.csv");
    out << "user,mean_response_ms,responses\n";
    std::map<std::string, std::pair<double, int>> per_user;
    for (const auto& r : m.responses) {
      per_user[r.user].first += r.ms;
      ++per_user[r.user].second;
    }
    for (const auto& [u, v] : per_user) out << u << ',' << fmt_double(v.first / v.second) << ',' << v.second << '\n';
  }
  return written;
}

LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw Error("fit_line needs two or more points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  LinearFit f;
  f.slope = sxx == 0 ? 0 : sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = (sxx == 0 || syy == 0) ? (syy == 0 ? 1.0 : 0.0) : (sxy * sxy) / (sxx * syy);
  return f;
}

}  // namespace ramp::harness
