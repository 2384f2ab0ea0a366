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
// Engagement measures from raw event logs of a flipped course: timely and
// total video watching (VD, TV), quiz participation (QP) and active
// classroom-session participation (ACS), all in [0, 1], plus summaries by
// exam-performance quartile.
//
// Log files (one CSV per channel, timestamps ISO-8601 UTC such as
// 2024-05-01T10:15:00Z):
//   students.csv        student_id, exam_points
//   videos.csv          video_id, segments, due
//   video_events.csv    student_id, video_id, segment, timestamp
//                       (empty segment marks an access without playback)
//   quizzes.csv         quiz_id, questions
//   quiz_events.csv     student_id, quiz_id, answered, points, timestamp
//   sessions.csv        session_id, relevant_questions
//   clicker_events.csv  student_id, session_id, answered
// A quiz or clicker event means the quiz was attempted or the session
// attended. Repeated events are merged (unique segments, maximum answered).

#ifndef FLIPDML_USAGE_H_
#define FLIPDML_USAGE_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace flipdml::usage {

// Seconds since 1970-01-01T00:00:00Z.
using Timestamp = std::int64_t;

// Accepts YYYY-MM-DDTHH:MM:SS with an optional trailing Z.
Timestamp ParseTimestamp(std::string_view text);
std::string FormatTimestamp(Timestamp t);

struct Student {
  std::string id;
  std::optional<double> exam_points;
};

struct Video {
  std::string id;
  int segments = 0;  // 5-second segments
  Timestamp due = 0;
};

struct VideoEvent {
  std::string student;
  std::string video;
  std::optional<int> segment;
  Timestamp time = 0;
};

struct Quiz {
  std::string id;
  int questions = 0;
};

struct QuizEvent {
  std::string student;
  std::string quiz;
  int answered = 0;
  double points = 0.0;
  Timestamp time = 0;
};

struct Session {
  std::string id;
  int relevant_questions = 0;
};

struct ClickerEvent {
  std::string student;
  std::string session;
  int answered = 0;
};

struct UsageLogs {
  std::vector<Student> students;
  std::vector<Video> videos;
  std::vector<VideoEvent> video_events;
  std::vector<Quiz> quizzes;
  std::vector<QuizEvent> quiz_events;
  std::vector<Session> sessions;
  std::vector<ClickerEvent> clicker_events;
  Timestamp exam = 0;

  // Throws ValidationError for unknown ids, out-of-range segments, answered
  // counts outside [0, questions], or an empty video catalog.
  void Validate() const;
};

struct UsageLogPaths {
  std::filesystem::path students;
  std::filesystem::path videos;
  std::filesystem::path video_events;
  std::filesystem::path quizzes;
  std::filesystem::path quiz_events;
  std::filesystem::path sessions;
  std::filesystem::path clicker_events;

  // The standard file names inside one directory.
  static UsageLogPaths InDirectory(const std::filesystem::path& dir);
};

UsageLogs LoadUsageLogs(const UsageLogPaths& paths, Timestamp exam);
void WriteUsageLogs(const UsageLogs& logs, const std::filesystem::path& dir);

struct UsageRecord {
  std::string student;
  double vd = 0.0;
  double tv = 0.0;
  double qp = 0.0;
  double acs = 0.0;
  std::optional<double> exam_points;
  int videos_accessed = 0;
};

// One record per student, in roster order. Only events up to the exam
// count; VD additionally counts a segment only if watched by the video's
// due time. Second factors average over accessed items only.
std::vector<UsageRecord> ComputeUsageMeasures(const UsageLogs& logs, int threads = 1);

struct MeasureSummary {
  double mean = 0.0;
  double median = 0.0;
  double min = 0.0;
  double max = 0.0;
};

struct QuartileGroup {
  int quartile = 0;  // 1..4
  double lower = 0.0;  // exclusive, except the first group
  double upper = 0.0;  // inclusive
  int n = 0;
  MeasureSummary vd, tv, qp, acs;
};

struct QuartileSummary {
  std::vector<double> cutoffs;  // three ascending exam-point boundaries
  std::vector<int> assignment;  // per record, 1..4
  std::vector<QuartileGroup> groups;  // non-empty groups only
  std::vector<std::string> warnings;
};

// Groups students by exam points: quartile k holds points in
// (cutoff[k-1], cutoff[k]], so ties fall to the lower quartile. Default
// cutoffs are the lower empirical quartiles x_(ceil(k n / 4)).
QuartileSummary SummarizeByQuartile(const std::vector<UsageRecord>& records,
                                    const std::optional<std::vector<double>>& cutoffs = std::nullopt);

struct AccessUsageSeries {
  std::vector<std::string> students;
  std::vector<int> accessed;
  std::vector<double> due_usage;    // accessed x mean in-time segment share
  std::vector<double> total_usage;  // accessed x mean pre-exam segment share
  double correlation_due = 0.0;     // with the access count; NaN if constant
  double correlation_total = 0.0;
};

AccessUsageSeries AccessVersusUsage(const UsageLogs& logs, int threads = 1);

}  // namespace flipdml::usage

#endif  // FLIPDML_USAGE_H_
