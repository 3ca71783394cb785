#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cdseg/evaluation/report.hpp"
#include "cdseg/geometry/cloud_io.hpp"

namespace cdseg::evaluation {

/// Numeric table written as tab-separated values with a header row.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  bool operator==(const Table&) const = default;
};

inline void write_table(const Table& t, const std::filesystem::path& path) {
  std::string out;
  for (std::size_t c = 0; c < t.columns.size(); ++c) out += (c ? "\t" : "") + t.columns[c];
  out += '\n';
  for (const auto& r : t.rows) {
    for (std::size_t c = 0; c < r.size(); ++c) {
      if (c) out += '\t';
      geometry::detail::append_double(out, r[c]);
    }
    out += '\n';
  }
  std::ofstream f(path);
  if (!f) throw Error("cannot write " + path.string());
  f << out;
}

inline Table read_table(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot read " + path.string());
  Table t;
  std::string line;
  std::size_t no = 0;
  while (std::getline(f, line)) {
    ++no;
    if (line.empty()) continue;
    auto toks = geometry::detail::split_ws(line);
    if (t.columns.empty()) {
      for (auto tok : toks) t.columns.emplace_back(tok);
      continue;
    }
    if (toks.size() != t.columns.size()) throw ParseError(no, "table row has " + std::to_string(toks.size()) + " fields");
    std::vector<double> row;
    for (auto tok : toks) row.push_back(geometry::detail::parse_number<double>(tok, no, "table value"));
    t.rows.push_back(std::move(row));
  }
  return t;
}

struct Series {
  std::string name;
  std::vector<double> x, y;
};

/// Minimal SVG line chart with axes, ticks and a legend.
inline void write_line_plot(const std::vector<Series>& series, const std::string& title, const std::string& xlabel,
                            const std::string& ylabel, const std::filesystem::path& path) {
  const double W = 640, H = 420, L = 70, R = 160, Tp = 40, B = 60;
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  if (x0 > x1) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 - x0 < 1e-12) x0 -= 0.5, x1 += 0.5;
  if (y1 - y0 < 1e-12) y0 -= 0.5, y1 += 0.5;
  const auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  const auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - Tp - B); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"};
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << Tp << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 5; ++k) {
    const double xv = x0 + (x1 - x0) * k / 5, yv = y0 + (y1 - y0) * k / 5;
    o << "<text x=\"" << px(xv) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">" << xv << "</text>\n";
    o << "<text x=\"" << L - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << yv << "</text>\n";
  }
  o << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 18 << "\" text-anchor=\"middle\">" << xlabel << "</text>\n";
  o << "<text transform=\"translate(18," << (Tp + H - B) / 2 << ") rotate(-90)\" text-anchor=\"middle\">" << ylabel << "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* c = colors[s % 8];
    o << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < series[s].x.size(); ++i) o << px(series[s].x[i]) << "," << py(series[s].y[i]) << " ";
    o << "\"/>\n";
    for (std::size_t i = 0; i < series[s].x.size(); ++i)
      o << "<circle cx=\"" << px(series[s].x[i]) << "\" cy=\"" << py(series[s].y[i]) << "\" r=\"3\" fill=\"" << c << "\"/>\n";
    const double ly = Tp + 16.0 * static_cast<double>(s);
    o << "<rect x=\"" << W - R + 12 << "\" y=\"" << ly << "\" width=\"12\" height=\"3\" fill=\"" << c << "\"/>\n";
    o << "<text x=\"" << W - R + 30 << "\" y=\"" << ly + 5 << "\">" << series[s].name << "</text>\n";
  }
  o << "</svg>\n";
  std::ofstream f(path);
  if (!f) throw Error("cannot write " + path.string());
  f << o.str();
}

namespace detail {

inline void emit(const Table& t, const std::vector<Series>& s, const std::string& stem, const std::string& title,
                 const std::string& xlabel, const std::string& ylabel, const std::filesystem::path& dir,
                 std::vector<std::filesystem::path>& files) {
  write_table(t, dir / (stem + ".tsv"));
  write_line_plot(s, title, xlabel, ylabel, dir / (stem + ".svg"));
  files.push_back(dir / (stem + ".tsv"));
  files.push_back(dir / (stem + ".svg"));
}

}  // namespace detail

/// Writes one table and one plot per (dist, metric) of a noise sweep, per
/// metric of a sparsity sweep, and per curve kind of a framework comparison.
/// Returns the written files; an empty result document writes nothing.
inline std::vector<std::filesystem::path> emit_plots(const json& doc, const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  const std::string kind = doc.value("kind", "");
  static const char* metric_names[] = {"miou", "macc", "allacc"};
  if (kind == "noise" || kind == "sparsity") {
    const auto& cells = doc.at("cells");
    if (cells.empty()) return files;
    std::filesystem::create_directories(dir);
    if (kind == "noise") {
      double clean[3] = {0, 0, 0};
      bool have_clean = false;
      std::map<std::string, std::vector<const json*>> by_dist;
      for (const auto& c : cells) {
        if (c.at("dist") == "clean") {
          for (int m = 0; m < 3; ++m) clean[m] = c.at("metrics").at(metric_names[m]).get<double>();
          have_clean = true;
        } else {
          by_dist[c.at("dist").get<std::string>()].push_back(&c);
        }
      }
      for (const auto& [dist, list] : by_dist)
        for (int m = 0; m < 3; ++m) {
          Table t{{"tau", metric_names[m]}, {}};
          if (have_clean) t.rows.push_back({0.0, clean[m]});
          for (const auto* c : list) t.rows.push_back({c->at("value").get<double>(), c->at("metrics").at(metric_names[m]).get<double>()});
          std::sort(t.rows.begin(), t.rows.end());
          Series s{dist, {}, {}};
          for (const auto& r : t.rows) s.x.push_back(r[0]), s.y.push_back(r[1]);
          detail::emit(t, {s}, "noise_" + dist + "_" + metric_names[m], dist + " perturbation", "tau", metric_names[m], dir, files);
        }
    } else {
      for (int m = 0; m < 3; ++m) {
        Table t{{"fraction", "seed", metric_names[m]}, {}};
        std::map<double, std::pair<double, int>> mean;
        for (const auto& c : cells) {
          const double f = c.at("value").get<double>(), v = c.at("metrics").at(metric_names[m]).get<double>();
          t.rows.push_back({f, static_cast<double>(c.at("seed").get<std::uint64_t>()), v});
          mean[f].first += v;
          ++mean[f].second;
        }
        Series s{"mean", {}, {}};
        for (const auto& [f, p] : mean) s.x.push_back(f), s.y.push_back(p.first / p.second);
        detail::emit(t, {s}, std::string("sparsity_") + metric_names[m], "training-fraction sweep", "fraction", metric_names[m],
                     dir, files);
      }
    }
  } else if (kind == "compare") {
    const auto& runs = doc.at("runs");
    if (runs.empty()) return files;
    std::filesystem::create_directories(dir);
    std::map<std::string, std::vector<const json*>> by_name;
    for (const auto& r : runs) by_name[r.at("name").get<std::string>()].push_back(&r);
    std::vector<Series> miou, loss, cost;
    for (const auto& [name, list] : by_name) {
      Table tm{{"seed", "step", "miou"}, {}}, tl{{"seed", "step", "loss"}, {}},
          tc{{"seed", "steps", "nn_encoder", "nn_decoder", "cn", "seconds"}, {}};
      std::map<double, std::pair<double, int>> mm, ml, mc;
      for (const auto* r : list) {
        const double seed = static_cast<double>(r->at("seed").get<std::uint64_t>());
        for (const auto& p : r->at("curve")) {
          const double st = p.at("step").get<double>(), v = p.at("miou").get<double>();
          tm.rows.push_back({seed, st, v});
          mm[st].first += v, ++mm[st].second;
        }
        const auto& l = r->at("loss");
        for (std::size_t i = 0; i < l.size(); ++i) {
          tl.rows.push_back({seed, static_cast<double>(i), l[i].get<double>()});
          ml[static_cast<double>(i)].first += l[i].get<double>(), ++ml[static_cast<double>(i)].second;
        }
        for (const auto& c : r->at("inference_cost")) {
          tc.rows.push_back({seed, c.at("steps").get<double>(), c.at("nn_encoder").get<double>(),
                             c.at("nn_decoder").get<double>(), c.at("cn").get<double>(), c.at("seconds").get<double>()});
          mc[c.at("steps").get<double>()].first += c.at("seconds").get<double>(), ++mc[c.at("steps").get<double>()].second;
        }
      }
      auto series = [&](const std::map<double, std::pair<double, int>>& m) {
        Series s{name, {}, {}};
        for (const auto& [x, p] : m) s.x.push_back(x), s.y.push_back(p.first / p.second);
        return s;
      };
      miou.push_back(series(mm));
      loss.push_back(series(ml));
      cost.push_back(series(mc));
      write_table(tm, dir / ("compare_" + name + "_miou.tsv"));
      write_table(tl, dir / ("compare_" + name + "_loss.tsv"));
      write_table(tc, dir / ("compare_" + name + "_inference_cost.tsv"));
      for (const char* k : {"_miou.tsv", "_loss.tsv", "_inference_cost.tsv"}) files.push_back(dir / ("compare_" + name + k));
    }
    write_line_plot(miou, "validation mIoU vs training step", "step", "mIoU", dir / "compare_miou.svg");
    write_line_plot(loss, "training loss vs step", "step", "loss", dir / "compare_loss.svg");
    write_line_plot(cost, "inference time vs sampling steps", "steps", "seconds", dir / "compare_inference_cost.svg");
    for (const char* k : {"compare_miou.svg", "compare_loss.svg", "compare_inference_cost.svg"}) files.push_back(dir / k);
  }
  return files;
}

}  // namespace cdseg::evaluation
