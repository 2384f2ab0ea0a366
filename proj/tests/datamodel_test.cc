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
#include "flipdml/datamodel.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "flipdml/csv.h"
#include "flipdml/errors.h"
#include "gtest/gtest.h"

namespace flipdml::data {
namespace {

constexpr char kSchema[] = R"({
  "id": "id",
  "treatment": "d",
  "outcomes": ["exam", "passed"],
  "covariates": ["age", {"name": "program", "type": "categorical",
                         "levels": ["bio", "chem", "phys"], "reference": "chem"}],
  "scales": [
    {"name": "anx", "items": ["a1", "a2", "a3"], "reversed": ["a2"]},
    {"name": "eff", "items": ["e1", "e2"], "questionnaire": "second", "reducible": false}
  ]
})";

constexpr char kCsv[] =
    "id,d,exam,passed,age,program,a1,a2,a3,e1,e2\n"
    "s1,1,30.5,1,20,bio,3,-3,2,1,0\n"
    "s2,0,NA,,22,chem,-1,1,0,2,2\n"
    "s3,1,18,0,19,phys,0,0,-2,-3,3\n"
    "s4,0,25,1,24,\"chem\",1,-2,1,0,-1\n";

TEST(CsvTest, QuotingRoundTrip) {
  const CsvTable t = ParseCsv("a,b\n\"x,1\",\"say \"\"hi\"\"\"\n");
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_EQ(t.rows[0][0], "x,1");
  EXPECT_EQ(t.rows[0][1], "say \"hi\"");
  std::ostringstream out;
  WriteCsvRow(out, t.rows[0]);
  EXPECT_EQ(out.str(), "\"x,1\",\"say \"\"hi\"\"\"\n");
  EXPECT_EQ(*t.Find("b"), 1u);
  EXPECT_FALSE(t.Find("c"));
  EXPECT_THROW(t.Require("c"), ConfigError);
}

TEST(CsvTest, NumberFormattingAndMissingTokens) {
  EXPECT_EQ(FormatNumber(1.0 / 3.0), "0.333333");
  EXPECT_EQ(FormatNumber(-0.0000001), "0.000000");
  EXPECT_TRUE(IsMissingToken("NA"));
  EXPECT_TRUE(IsMissingToken(""));
  EXPECT_FALSE(IsMissingToken("0"));
  EXPECT_THROW(ParseDouble("1.5x", "cell"), ValidationError);
  EXPECT_THROW(ParseDouble("inf", "cell"), ValidationError);
  EXPECT_EQ(ParseDouble(" 2.25", "cell"), 2.25);
}

TEST(SchemaTest, ParsesAndRoundTrips) {
  const Schema s = SchemaFromJson(kSchema);
  ASSERT_EQ(s.scales.size(), 2u);
  EXPECT_EQ(s.scales[0].reversed, (std::vector<bool>{false, true, false}));
  EXPECT_FALSE(s.scales[1].reducible);
  EXPECT_EQ(s.scales[1].questionnaire, Questionnaire::kSecond);
  EXPECT_EQ(s.AnalysisColumns(),
            (std::vector<std::string>{"age", "program", "a1", "a2", "a3", "e1", "e2"}));
  const Schema again = SchemaFromJson(SchemaToJson(s));
  EXPECT_EQ(SchemaToJson(again), SchemaToJson(s));
}

TEST(SchemaTest, RejectsBrokenDefinitions) {
  EXPECT_THROW(SchemaFromJson(R"({"scales": [{"name": "s", "items": ["x"]}]})"), ConfigError);
  EXPECT_THROW(SchemaFromJson(R"({"scales": [{"name": "s", "items": ["x", "y"]},
                                              {"name": "t", "items": ["y", "z"]}]})"),
               ConfigError);
  EXPECT_THROW(SchemaFromJson(R"({"scales": [{"name": "s", "items": ["x", "y"],
                                              "reversed": ["z"]}]})"),
               ConfigError);
  EXPECT_THROW(SchemaFromJson(R"({"covariates": ["d"]})"), ConfigError);
  EXPECT_THROW(SchemaFromJson("{not json"), ConfigError);
  EXPECT_THROW(SchemaFromJson(R"({"covariates": [{"name": "g", "type": "categorical",
                                                  "levels": ["a"], "reference": "b"}]})"),
               ConfigError);
}

TEST(DatasetTest, ReverseItemsAreAlignedOnLoad) {
  const Dataset ds = ParseDataset(kCsv, SchemaFromJson(kSchema));
  EXPECT_EQ(ds.rows(), 4);
  EXPECT_EQ(ds.CountTreated(), 2);
  EXPECT_EQ(ds.Numeric("a2")[0], 3.0);
  EXPECT_EQ(ds.Numeric("a1")[0], 3.0);
  EXPECT_TRUE(std::isnan(ds.Numeric("exam")[1]));
  EXPECT_TRUE(std::isnan(ds.Numeric("passed")[1]));
  EXPECT_EQ(ds.Categorical("program")[3], "chem");
  const Eigen::MatrixXd block = ds.ItemMatrix(ds.schema().Scale("anx"));
  EXPECT_EQ(block.rows(), 4);
  EXPECT_EQ(block(1, 1), -1.0);
}

TEST(DatasetTest, WriteRestoresQuestionnairePolarity) {
  const Schema schema = SchemaFromJson(kSchema);
  const Dataset ds = ParseDataset(kCsv, schema);
  const auto path = std::filesystem::temp_directory_path() / "flipdml_datamodel_roundtrip.csv";
  WriteDataset(path, ds);
  const CsvTable raw = ReadCsv(path);
  EXPECT_EQ(raw.rows[0][raw.Require("a2")], "-3");
  const Dataset again = LoadDataset(path, schema);
  EXPECT_EQ(again.Numeric("a2"), ds.Numeric("a2"));
  EXPECT_EQ(again.ids(), ds.ids());
  std::filesystem::remove(path);
}

TEST(DatasetTest, ValidationErrors) {
  const Schema schema = SchemaFromJson(kSchema);
  auto replace = [](std::string text, const std::string& from, const std::string& to) {
    text.replace(text.find(from), from.size(), to);
    return text;
  };
  const std::string csv = kCsv;
  EXPECT_THROW(ParseDataset(replace(csv, "s2,0", "s2,2"), schema), ValidationError);
  EXPECT_THROW(ParseDataset(replace(csv, "s2,", "s1,"), schema), ValidationError);
  EXPECT_THROW(ParseDataset(replace(csv, "19,phys,0", "19,phys,4"), schema), ValidationError);
  EXPECT_THROW(ParseDataset(replace(csv, "19,phys,0", "19,phys,0.5"), schema), ValidationError);
  EXPECT_THROW(ParseDataset(replace(csv, "22,chem", ",chem"), schema), ValidationError);
  EXPECT_THROW(ParseDataset(replace(csv, "22,chem", "22,math"), schema), ValidationError);
  EXPECT_THROW(ParseDataset(replace(csv, ",e2\n", ",e3\n"), schema), ConfigError);
  const std::string single = replace(replace(csv, "s2,0", "s2,1"), "s4,0", "s4,1");
  EXPECT_THROW(ParseDataset(single, schema), ValidationError);
}

TEST(DesignMatrixTest, DummyCodingAgainstReference) {
  const Dataset ds = ParseDataset(kCsv, SchemaFromJson(kSchema));
  const std::vector<std::string> cols{"age", "program", "a1"};
  const DesignMatrix dm = BuildDesignMatrix(ds, cols, false);
  EXPECT_EQ(dm.labels, (std::vector<std::string>{"age", "program=bio", "program=phys", "a1"}));
  EXPECT_EQ(dm.reference_levels.at("program"), "chem");
  EXPECT_EQ(dm.matrix(0, 1), 1.0);
  EXPECT_EQ(dm.matrix(2, 2), 1.0);
  EXPECT_EQ(dm.matrix(1, 1) + dm.matrix(1, 2), 0.0);
  for (Eigen::Index i = 0; i < ds.rows(); ++i) {
    EXPECT_EQ(DecodeLevel(dm, "program", i), ds.Categorical("program")[static_cast<std::size_t>(i)]);
  }
}

TEST(DesignMatrixTest, StandardizedColumns) {
  const Dataset ds = ParseDataset(kCsv, SchemaFromJson(kSchema));
  const std::vector<std::string> cols{"age", "program", "e2"};
  const DesignMatrix dm = BuildDesignMatrix(ds, cols, true);
  for (Eigen::Index j = 0; j < dm.matrix.cols(); ++j) {
    EXPECT_NEAR(dm.matrix.col(j).mean(), 0.0, 1e-12);
    EXPECT_NEAR(dm.matrix.col(j).squaredNorm() / 3.0, 1.0, 1e-12);
  }
  EXPECT_EQ(DecodeLevel(dm, "program", 2), "phys");
  EXPECT_THROW(BuildDesignMatrix(ds, std::vector<std::string>{"exam"}, false), ValidationError);
  EXPECT_THROW(BuildDesignMatrix(ds, std::vector<std::string>{"nope"}, false), ConfigError);
}

TEST(DesignMatrixTest, ConstantColumnNamedWhenStandardizing) {
  const std::string csv =
      "id,d,exam,passed,age,program,a1,a2,a3,e1,e2\n"
      "s1,1,1,1,20,bio,3,-3,2,1,0\n"
      "s2,0,2,1,20,bio,-1,1,0,2,2\n";
  const Dataset ds = ParseDataset(csv, SchemaFromJson(kSchema));
  try {
    BuildDesignMatrix(ds, std::vector<std::string>{"age"}, true);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("age"), std::string::npos);
  }
}

TEST(SampleTest, ListwiseExclusion) {
  const Dataset ds = ParseDataset(kCsv, SchemaFromJson(kSchema));
  const Sample all = SelectSample(ds, {"all", {}});
  EXPECT_EQ(all.data.rows(), 4);
  const Sample exam = SelectSample(ds, {"exam", {"exam", "passed"}});
  EXPECT_EQ(exam.data.rows(), 3);
  EXPECT_EQ(exam.dropped, 1);
  EXPECT_EQ(exam.treated, 2);
  EXPECT_EQ(exam.control, 1);
  EXPECT_EQ(exam.data.ids(), (std::vector<std::string>{"s1", "s3", "s4"}));
  EXPECT_THROW(SelectSample(ds, {"bad", {"missing_outcome"}}), ConfigError);
  const std::vector<std::string> cols{"exam"};
  EXPECT_EQ(CompleteRows(ds, cols), (std::vector<Eigen::Index>{0, 2, 3}));
}

}  // namespace
}  // namespace flipdml::data
