/*
 * Copyright 2026 The TUNA-CIL Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#include "tuna/harness/plot.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "tuna/errors.hpp"

namespace tuna {

using nlohmann::json;

RunReport report_from_json(const json& doc) {
  RunReport r;
  try {
    r.strategies = doc.at("strategies").get<std::vector<std::string>>();
    for (const auto& s : doc.at("stages")) {
      StageReport st;
      st.stage = s.at("stage").get<std::size_t>();
      st.classes_seen = s.at("classes_seen").get<std::size_t>();
      st.accuracy = s.at("accuracy").get<std::map<std::string, double>>();
      st.selection_accuracy = s.at("selection_accuracy").get<double>();
      st.orth_gram_l1 = s.at("orth_gram_l1").get<double>();
      st.train_loss = s.at("train_loss").get<double>();
      st.train_accuracy = s.at("train_accuracy").get<double>();
      r.stages.push_back(std::move(st));
    }
    r.average = doc.at("average_accuracy").get<std::map<std::string, double>>();
    r.last = doc.at("last_accuracy").get<std::map<std::string, double>>();
    r.config = doc.value("config", json::object());
    r.wall_clock_seconds = doc.value("wall_clock_seconds", 0.0);
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed report: ") + e.what());
  }
  for (const auto& st : r.stages)
    for (const auto& s : r.strategies)
      if (!st.accuracy.count(s)) throw DataError("malformed report: stage " + std::to_string(st.stage) + " lacks '" + s + "'");
  return r;
}

RunReport load_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open report " + path.string());
  try {
    return report_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace

std::string accuracy_svg(const RunReport& report, const std::string& title) {
  const double W = 640, H = 420, left = 60, right = 150, top = 40, bottom = 50;
  const double pw = W - left - right, ph = H - top - bottom;
  double xmin = 0, xmax = 1;
  if (!report.stages.empty()) {
    xmin = static_cast<double>(report.stages.front().classes_seen);
    xmax = static_cast<double>(report.stages.back().classes_seen);
  }
  if (xmax <= xmin) xmax = xmin + 1;
  auto px = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double acc) { return top + (1.0 - acc) * ph; };

  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << W << "\" height=\"" << H
     << "\" viewBox=\"0 0 " << W << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << left + pw / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << title << "</text>\n";
  for (int i = 0; i <= 5; ++i) {
    const double acc = i / 5.0, y = py(acc);
    os << "<line x1=\"" << left << "\" y1=\"" << y << "\" x2=\"" << left + pw << "\" y2=\"" << y
       << "\" stroke=\"#ddd\"/>\n"
       << "<text x=\"" << left - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << i * 20 << "</text>\n";
  }
  for (const auto& st : report.stages) {
    const double x = px(static_cast<double>(st.classes_seen));
    os << "<text x=\"" << x << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">" << st.classes_seen
       << "</text>\n";
  }
  os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"black\"/>\n"
     << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">Number of classes</text>\n"
     << "<text transform=\"translate(16," << top + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">Accuracy (%)</text>\n";

  for (std::size_t k = 0; k < report.strategies.size(); ++k) {
    const auto& name = report.strategies[k];
    const char* color = kPalette[k % std::size(kPalette)];
    std::ostringstream pts;
    for (const auto& st : report.stages) {
      pts << fmt(px(static_cast<double>(st.classes_seen))) << ',' << fmt(py(st.accuracy.at(name))) << ' ';
    }
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"" << pts.str() << "\"/>\n";
    for (const auto& st : report.stages) {
      os << "<circle cx=\"" << fmt(px(static_cast<double>(st.classes_seen))) << "\" cy=\""
         << fmt(py(st.accuracy.at(name))) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    }
    const double ly = top + 10 + 20.0 * static_cast<double>(k);
    os << "<line x1=\"" << left + pw + 12 << "\" y1=\"" << ly << "\" x2=\"" << left + pw + 32 << "\" y2=\"" << ly
       << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n"
       << "<text x=\"" << left + pw + 38 << "\" y=\"" << ly + 4 << "\">" << name;
    if (report.average.count(name)) os << " (" << fmt(100.0 * report.average.at(name)) << ")";
    os << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string entropy_svg(const EntropyProfile& profile) {
  const std::size_t n = profile.mean_entropy.size();
  const double cell = 48, left = 90, top = 50;
  const double W = left + cell * static_cast<double>(n) + 30, H = top + cell * static_cast<double>(n) + 50;
  double hi = 0;
  for (const auto& row : profile.mean_entropy)
    for (double v : row) hi = std::max(hi, v);
  if (hi <= 0) hi = 1;
  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << W << "\" height=\"" << H
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">Mean entropy (adapter x task)</text>\n";
  for (std::size_t b = 0; b < n; ++b) {
    os << "<text x=\"" << left - 8 << "\" y=\"" << top + cell * (static_cast<double>(b) + 0.5) + 4
       << "\" text-anchor=\"end\">task " << b + 1 << "</text>\n";
    for (std::size_t a = 0; a < n; ++a) {
      const double v = profile.mean_entropy[b][a];
      const int shade = static_cast<int>(255.0 * (1.0 - v / hi));
      os << "<rect x=\"" << left + cell * static_cast<double>(a) << "\" y=\"" << top + cell * static_cast<double>(b)
         << "\" width=\"" << cell << "\" height=\"" << cell << "\" fill=\"rgb(255," << shade << ',' << shade
         << ")\" stroke=\"white\"/>\n"
         << "<text x=\"" << left + cell * (static_cast<double>(a) + 0.5) << "\" y=\""
         << top + cell * (static_cast<double>(b) + 0.5) + 4 << "\" text-anchor=\"middle\">" << fmt(v) << "</text>\n";
    }
  }
  for (std::size_t a = 0; a < n; ++a) {
    os << "<text x=\"" << left + cell * (static_cast<double>(a) + 0.5) << "\" y=\"" << top + cell * static_cast<double>(n) + 18
       << "\" text-anchor=\"middle\">A" << a + 1 << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed for " + path.string());
}

}  // namespace tuna
