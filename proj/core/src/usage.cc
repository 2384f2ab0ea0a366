/*
* Copyright 2026 The flipdml Authors.
*
* Licensed under the Apache License, Version 2.0 (the "License");
* you may not use this file except in compliance with the License.
* You may obtain a copy of the License at
*
*     https://www.apache.org/licenses/LICENSE-2.0
*
* Unless required by applicable law or agreed to in writing, software
* distributed under the License is distributed on an "AS IS" BASIS,
* WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
* See the License for the specific language governing permissions and
* limitations under the License.
* ============================================================================
*/
#include "flipdml/usage.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <unordered_map>

#include "flipdml/csv.h"
#include "flipdml/errors.h"
#include "flipdml/parallel.h"

namespace flipdml::usage {

namespace {

using IndexMap = std::unordered_map<std::string, std::size_t>;

template <typename T>
IndexMap IndexById(const std::vector<T>& items, const char* what) {
  IndexMap map;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (!map.emplace(items[i].id, i).second) {
      throw ValidationError(std::string("duplicate ") + what + " id '" + items[i].id + "'");
    }
  }
  return map;
}

std::size_t Lookup(const IndexMap& map, const std::string& id, const char* what) {
  const auto it = map.find(id);
  if (it == map.end()) throw ValidationError(std::string("unknown ") + what + " id '" + id + "'");
  return it->second;
}

int ParseCount(const std::string& token, const std::string& context) {
  const double v = ParseDouble(token, context);
  if (v != std::floor(v) || v < 0 || v > std::numeric_limits<int>::max()) {
    throw ValidationError(context + ": expected a non-negative integer, got '" + token + "'");
  }
  return static_cast<int>(v);
}


// Per-student video aggregates.
struct VideoTotals {
  int accessed = 0;
  double due_share_sum = 0.0;
  double total_share_sum = 0.0;
};

struct StudentEvents {
  std::vector<std::size_t> video, quiz, clicker;
};

struct Indexed {
  IndexMap students, videos, quizzes, sessions;
  std::vector<StudentEvents> events;
};

Indexed IndexLogs(const UsageLogs& logs) {
  Indexed ix;
  for (std::size_t i = 0; i < logs.students.size(); ++i) {
    if (!ix.students.emplace(logs.students[i].id, i).second) {
      throw ValidationError("duplicate student id '" + logs.students[i].id + "'");
    }
  }
  ix.videos = IndexById(logs.videos, "video");
  ix.quizzes = IndexById(logs.quizzes, "quiz");
  ix.sessions = IndexById(logs.sessions, "session");
  ix.events.resize(logs.students.size());
  for (std::size_t e = 0; e < logs.video_events.size(); ++e) {
    ix.events[Lookup(ix.students, logs.video_events[e].student, "student")].video.push_back(e);
  }
  for (std::size_t e = 0; e < logs.quiz_events.size(); ++e) {
    ix.events[Lookup(ix.students, logs.quiz_events[e].student, "student")].quiz.push_back(e);
  }
  for (std::size_t e = 0; e < logs.clicker_events.size(); ++e) {
    ix.events[Lookup(ix.students, logs.clicker_events[e].student, "student")].clicker.push_back(e);
  }
  return ix;
}

VideoTotals StudentVideoTotals(const UsageLogs& logs, const Indexed& ix, const StudentEvents& ev) {
  struct Watched {
    bool accessed = false;
    std::vector<char> in_time, before_exam;
  };
  std::unordered_map<std::size_t, Watched> per_video;
  for (std::size_t e : ev.video) {
    const VideoEvent& event = logs.video_events[e];
    if (event.time > logs.exam) continue;
    const std::size_t v = Lookup(ix.videos, event.video, "video");
    const Video& video = logs.videos[v];
    Watched& w = per_video[v];
    if (!w.accessed) {
      w.accessed = true;
      w.in_time.assign(static_cast<std::size_t>(video.segments), 0);
      w.before_exam.assign(static_cast<std::size_t>(video.segments), 0);
    }
    if (!event.segment) continue;
    const auto s = static_cast<std::size_t>(*event.segment);
    w.before_exam[s] = 1;
    if (event.time <= video.due) w.in_time[s] = 1;
  }
  VideoTotals t;
  for (const auto& [v, w] : per_video) {
    const double segments = static_cast<double>(logs.videos[v].segments);
    ++t.accessed;
    t.due_share_sum += static_cast<double>(std::count(w.in_time.begin(), w.in_time.end(), 1)) / segments;
    t.total_share_sum += static_cast<double>(std::count(w.before_exam.begin(), w.before_exam.end(), 1)) / segments;
  }
  return t;
}

// (share of items engaged) x (mean completion share over engaged items).
double ProductMeasure(std::size_t catalog, const std::unordered_map<std::size_t, double>& completion) {
  if (catalog == 0 || completion.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& [item, share] : completion) sum += share;
  const double engaged = static_cast<double>(completion.size());
  return engaged / static_cast<double>(catalog) * (sum / engaged);
}

double Pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  if (a.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (!(saa > 0.0 && sbb > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  return sab / std::sqrt(saa * sbb);
}

MeasureSummary Summarize(std::vector<double> values) {
  MeasureSummary s;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(n);
  s.median = n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
  s.min = values.front();
  s.max = values.back();
  return s;
}

}  // namespace

Timestamp ParseTimestamp(std::string_view text) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0, consumed = 0;
  const std::string str(text);
  if (std::sscanf(str.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d%n", &y, &mo, &d, &h, &mi, &s, &consumed) != 6) {
    throw ValidationError("malformed timestamp '" + str + "'");
  }
  const std::string rest = str.substr(static_cast<std::size_t>(consumed));
  using namespace std::chrono;
  const year_month_day date{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!(rest.empty() || rest == "Z") || !date.ok() || h > 23 || mi > 59 || s > 60 || h < 0 || mi < 0 || s < 0) {
    throw ValidationError("malformed timestamp '" + str + "'");
  }
  const sys_seconds t = sys_days(date) + hours(h) + minutes(mi) + seconds(s);
  return t.time_since_epoch().count();
}

std::string FormatTimestamp(Timestamp t) {
  using namespace std::chrono;
  const sys_seconds tp{seconds(t)};
  const sys_days day_point = floor<days>(tp);
  const year_month_day date{day_point};
  const hh_mm_ss<seconds> time{tp - day_point};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02lld:%02lld:%02lldZ", static_cast<int>(date.year()),
                static_cast<unsigned>(date.month()), static_cast<unsigned>(date.day()),
                static_cast<long long>(time.hours().count()), static_cast<long long>(time.minutes().count()),
                static_cast<long long>(time.seconds().count()));
  return buf;
}

void UsageLogs::Validate() const {
  if (videos.empty()) throw ValidationError("usage: the video catalog is empty");
  for (const auto& v : videos) {
    if (v.segments < 1) throw ValidationError("usage: video '" + v.id + "' has no segments");
  }
  for (const auto& q : quizzes) {
    if (q.questions < 1) throw ValidationError("usage: quiz '" + q.id + "' has no questions");
  }
  for (const auto& s : sessions) {
    if (s.relevant_questions < 1) {
      throw ValidationError("usage: session '" + s.id + "' has no relevant questions");
    }
  }
  const Indexed ix = IndexLogs(*this);
  for (const auto& e : video_events) {
    const Video& v = videos[Lookup(ix.videos, e.video, "video")];
    if (e.segment && (*e.segment < 0 || *e.segment >= v.segments)) {
      throw ValidationError("usage: segment " + std::to_string(*e.segment) + " out of range for video '" +
                            v.id + "'");
    }
  }
  for (const auto& e : quiz_events) {
    const Quiz& q = quizzes[Lookup(ix.quizzes, e.quiz, "quiz")];
    if (e.answered < 0 || e.answered > q.questions) {
      throw ValidationError("usage: answered count out of range for quiz '" + q.id + "'");
    }
  }
  for (const auto& e : clicker_events) {
    const Session& s = sessions[Lookup(ix.sessions, e.session, "session")];
    if (e.answered < 0 || e.answered > s.relevant_questions) {
      throw ValidationError("usage: answered count out of range for session '" + s.id + "'");
    }
  }
}

UsageLogPaths UsageLogPaths::InDirectory(const std::filesystem::path& dir) {
  return {dir / "students.csv", dir / "videos.csv",   dir / "video_events.csv", dir / "quizzes.csv",
          dir / "quiz_events.csv", dir / "sessions.csv", dir / "clicker_events.csv"};
}

UsageLogs LoadUsageLogs(const UsageLogPaths& paths, Timestamp exam) {
  UsageLogs logs;
  logs.exam = exam;
  {
    const CsvTable t = ReadCsv(paths.students);
    const auto id = t.Require("student_id");
    const auto points = t.Find("exam_points");
    for (const auto& row : t.rows) {
      Student s{row[id], std::nullopt};
      if (points && !IsMissingToken(row[*points])) s.exam_points = ParseDouble(row[*points], "exam_points");
      logs.students.push_back(std::move(s));
    }
  }
  {
    const CsvTable t = ReadCsv(paths.videos);
    const auto id = t.Require("video_id"), seg = t.Require("segments"), due = t.Require("due");
    for (const auto& row : t.rows) {
      logs.videos.push_back({row[id], ParseCount(row[seg], "segments"), ParseTimestamp(row[due])});
    }
  }
  {
    const CsvTable t = ReadCsv(paths.video_events);
    const auto st = t.Require("student_id"), vid = t.Require("video_id"), seg = t.Require("segment"),
               ts = t.Require("timestamp");
    for (const auto& row : t.rows) {
      VideoEvent e{row[st], row[vid], std::nullopt, ParseTimestamp(row[ts])};
      if (!IsMissingToken(row[seg])) e.segment = ParseCount(row[seg], "segment");
      logs.video_events.push_back(std::move(e));
    }
  }
  if (std::filesystem::exists(paths.quizzes)) {
    const CsvTable t = ReadCsv(paths.quizzes);
    const auto id = t.Require("quiz_id"), qs = t.Require("questions");
    for (const auto& row : t.rows) logs.quizzes.push_back({row[id], ParseCount(row[qs], "questions")});
  }
  if (std::filesystem::exists(paths.quiz_events)) {
    const CsvTable t = ReadCsv(paths.quiz_events);
    const auto st = t.Require("student_id"), qz = t.Require("quiz_id"), ans = t.Require("answered");
    const auto pts = t.Find("points"), ts = t.Find("timestamp");
    for (const auto& row : t.rows) {
      QuizEvent e{row[st], row[qz], ParseCount(row[ans], "answered"), 0.0, exam};
      if (pts && !IsMissingToken(row[*pts])) e.points = ParseDouble(row[*pts], "points");
      if (ts && !IsMissingToken(row[*ts])) e.time = ParseTimestamp(row[*ts]);
      logs.quiz_events.push_back(std::move(e));
    }
  }
  if (std::filesystem::exists(paths.sessions)) {
    const CsvTable t = ReadCsv(paths.sessions);
    const auto id = t.Require("session_id"), rel = t.Require("relevant_questions");
    for (const auto& row : t.rows) logs.sessions.push_back({row[id], ParseCount(row[rel], "relevant_questions")});
  }
  if (std::filesystem::exists(paths.clicker_events)) {
    const CsvTable t = ReadCsv(paths.clicker_events);
    const auto st = t.Require("student_id"), ss = t.Require("session_id"), ans = t.Require("answered");
    for (const auto& row : t.rows) {
      logs.clicker_events.push_back({row[st], row[ss], ParseCount(row[ans], "answered")});
    }
  }
  logs.Validate();
  return logs;
}

void WriteUsageLogs(const UsageLogs& logs, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const UsageLogPaths p = UsageLogPaths::InDirectory(dir);
  auto open = [](const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    return out;
  };
  {
    auto out = open(p.students);
    WriteCsvRow(out, {"student_id", "exam_points"});
    for (const auto& s : logs.students) {
      WriteCsvRow(out, {s.id, s.exam_points ? FormatNumber(*s.exam_points, 1) : "NA"});
    }
  }
  {
    auto out = open(p.videos);
    WriteCsvRow(out, {"video_id", "segments", "due"});
    for (const auto& v : logs.videos) WriteCsvRow(out, {v.id, std::to_string(v.segments), FormatTimestamp(v.due)});
  }
  {
    auto out = open(p.video_events);
    WriteCsvRow(out, {"student_id", "video_id", "segment", "timestamp"});
    for (const auto& e : logs.video_events) {
      WriteCsvRow(out, {e.student, e.video, e.segment ? std::to_string(*e.segment) : "", FormatTimestamp(e.time)});
    }
  }
  {
    auto out = open(p.quizzes);
    WriteCsvRow(out, {"quiz_id", "questions"});
    for (const auto& q : logs.quizzes) WriteCsvRow(out, {q.id, std::to_string(q.questions)});
  }
  {
    auto out = open(p.quiz_events);
    WriteCsvRow(out, {"student_id", "quiz_id", "answered", "points", "timestamp"});
    for (const auto& e : logs.quiz_events) {
      WriteCsvRow(out, {e.student, e.quiz, std::to_string(e.answered), FormatNumber(e.points, 2),
                        FormatTimestamp(e.time)});
    }
  }
  {
    auto out = open(p.sessions);
    WriteCsvRow(out, {"session_id", "relevant_questions"});
    for (const auto& s : logs.sessions) WriteCsvRow(out, {s.id, std::to_string(s.relevant_questions)});
  }
  {
    auto out = open(p.clicker_events);
    WriteCsvRow(out, {"student_id", "session_id", "answered"});
    for (const auto& e : logs.clicker_events) WriteCsvRow(out, {e.student, e.session, std::to_string(e.answered)});
  }
}

std::vector<UsageRecord> ComputeUsageMeasures(const UsageLogs& logs, int threads) {
  logs.Validate();
  const Indexed ix = IndexLogs(logs);
  std::vector<UsageRecord> records(logs.students.size());
  ParallelFor(records.size(), threads, [&](std::size_t i) {
    const StudentEvents& ev = ix.events[i];
    UsageRecord& r = records[i];
    r.student = logs.students[i].id;
    r.exam_points = logs.students[i].exam_points;

    const VideoTotals vt = StudentVideoTotals(logs, ix, ev);
    r.videos_accessed = vt.accessed;
    if (vt.accessed > 0) {
      const double videos = static_cast<double>(logs.videos.size());
      const double share = static_cast<double>(vt.accessed) / videos;
      r.vd = share * (vt.due_share_sum / vt.accessed);
      r.tv = share * (vt.total_share_sum / vt.accessed);
    }

    std::unordered_map<std::size_t, double> quiz_completion;
    for (std::size_t e : ev.quiz) {
      const QuizEvent& event = logs.quiz_events[e];
      if (event.time > logs.exam) continue;
      const std::size_t q = Lookup(ix.quizzes, event.quiz, "quiz");
      const double share = static_cast<double>(event.answered) / logs.quizzes[q].questions;
      auto [it, inserted] = quiz_completion.emplace(q, share);
      if (!inserted) it->second = std::max(it->second, share);
    }
    r.qp = ProductMeasure(logs.quizzes.size(), quiz_completion);

    std::unordered_map<std::size_t, double> session_completion;
    for (std::size_t e : ev.clicker) {
      const ClickerEvent& event = logs.clicker_events[e];
      const std::size_t s = Lookup(ix.sessions, event.session, "session");
      const double share = static_cast<double>(event.answered) / logs.sessions[s].relevant_questions;
      auto [it, inserted] = session_completion.emplace(s, share);
      if (!inserted) it->second = std::max(it->second, share);
    }
    r.acs = ProductMeasure(logs.sessions.size(), session_completion);
  });
  return records;
}

QuartileSummary SummarizeByQuartile(const std::vector<UsageRecord>& records,
                                    const std::optional<std::vector<double>>& cutoffs) {
  if (records.size() < 4) throw ValidationError("quartile summary needs at least 4 students");
  std::vector<double> points;
  for (const auto& r : records) {
    if (!r.exam_points) throw ValidationError("student '" + r.student + "' has no exam points");
    points.push_back(*r.exam_points);
  }
  QuartileSummary out;
  if (cutoffs) {
    if (cutoffs->size() != 3 || !std::is_sorted(cutoffs->begin(), cutoffs->end())) {
      throw ConfigError("quartile cutoffs must be three ascending values");
    }
    out.cutoffs = *cutoffs;
  } else {
    std::vector<double> sorted = points;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    for (std::size_t k = 1; k <= 3; ++k) {
      const std::size_t rank = (k * n + 3) / 4;  // ceil(k n / 4)
      out.cutoffs.push_back(sorted[rank - 1]);
    }
  }
  for (double p : points) {
    int q = 1;
    for (double c : out.cutoffs) q += p > c;
    out.assignment.push_back(q);
  }
  const double lowest = *std::min_element(points.begin(), points.end());
  for (int q = 1; q <= 4; ++q) {
    std::vector<double> vd, tv, qp, acs;
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (out.assignment[i] != q) continue;
      vd.push_back(records[i].vd);
      tv.push_back(records[i].tv);
      qp.push_back(records[i].qp);
      acs.push_back(records[i].acs);
    }
    if (vd.empty()) continue;
    QuartileGroup g;
    g.quartile = q;
    g.lower = q == 1 ? lowest : out.cutoffs[static_cast<std::size_t>(q - 2)];
    g.upper = q == 4 ? *std::max_element(points.begin(), points.end()) : out.cutoffs[static_cast<std::size_t>(q - 1)];
    g.n = static_cast<int>(vd.size());
    g.vd = Summarize(vd);
    g.tv = Summarize(tv);
    g.qp = Summarize(qp);
    g.acs = Summarize(acs);
    out.groups.push_back(g);
  }
  if (out.groups.size() == 1) {
    out.warnings.push_back("all students fall in one exam-point group; quartiles are degenerate");
  } else if (out.groups.size() < 4) {
    out.warnings.push_back("ties in exam points leave some quartiles empty");
  }
  return out;
}

AccessUsageSeries AccessVersusUsage(const UsageLogs& logs, int threads) {
  logs.Validate();
  const Indexed ix = IndexLogs(logs);
  const std::size_t n = logs.students.size();
  std::vector<VideoTotals> totals(n);
  ParallelFor(n, threads, [&](std::size_t i) { totals[i] = StudentVideoTotals(logs, ix, ix.events[i]); });
  AccessUsageSeries out;
  std::vector<double> access;
  for (std::size_t i = 0; i < n; ++i) {
    out.students.push_back(logs.students[i].id);
    out.accessed.push_back(totals[i].accessed);
    access.push_back(totals[i].accessed);
    out.due_usage.push_back(totals[i].due_share_sum);
    out.total_usage.push_back(totals[i].total_share_sum);
  }
  out.correlation_due = Pearson(access, out.due_usage);
  out.correlation_total = Pearson(access, out.total_usage);
  return out;
}

}  // namespace flipdml::usage
