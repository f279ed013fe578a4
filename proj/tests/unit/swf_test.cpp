#include "ramp/error.hpp"
#include "ramp/swf.hpp"

#include "ramp_test/support.hpp"

#include <gtest/gtest.h>

#include <filesystem>

namespace ramp::queuesim {
namespace {

using testing::read_file;
using testing::testdata;

TEST(ParseSwf, TwoJobs) {
  const auto log = parse_swf(
      "1 0 0 100 4 -1 -1 4 3600 -1 1 1 1 -1 1 1 -1 -1\n"
      "2 10 0 100 4 -1 -1 4 3600 -1 1 1 1 -1 1 1 -1 -1\n");
  ASSERT_EQ(log.jobs.size(), 2u);
  EXPECT_EQ(log.jobs[0].job_id(), 1);
  EXPECT_EQ(log.jobs[1].job_id(), 2);
  EXPECT_EQ(log.jobs[1].submit_time(), 10);
}

TEST(ParseSwf, SeventeenFieldsIsAnError) {
  EXPECT_THROW(parse_swf("1 0 0 100 4 -1 -1 4 3600 -1 1 1 1 -1 1 1 -1\n"), ParseError);
}

TEST(ParseSwf, KeepsHeaderAndSortsBySubmit) {
  const auto log = parse_swf(
      "; Version: 2.2\n"
      "2 50 0 10 1 -1 -1 1 10 -1 1 1 1 -1 1 1 -1 -1\n"
      "\n"
      "1 5 0 10 1 -1 -1 1 10 -1 1 1 1 -1 1 1 -1 -1\r\n");
  ASSERT_EQ(log.comments.size(), 1u);
  EXPECT_EQ(log.comments[0], "; Version: 2.2");
  ASSERT_EQ(log.jobs.size(), 2u);
  EXPECT_EQ(log.jobs[0].job_id(), 1);
}

TEST(PwaSample, RoundTripsThroughSerialize) {
  const auto first = load_swf_file(testdata("swf/pwa_sample_50.swf"));
  ASSERT_EQ(first.jobs.size(), 50u);
  EXPECT_FALSE(first.comments.empty());
  const auto text = serialize_swf(first);
  const auto second = parse_swf(text);
  EXPECT_EQ(second, first);
  EXPECT_EQ(serialize_swf(second), text);
}

TEST(PwaSample, FractionalCpuTimeSurvives) {
  const auto log = load_swf_file(testdata("swf/pwa_sample_50.swf"));
  bool fractional = false;
  for (const auto& j : log.jobs) fractional |= j.fields[5] != static_cast<double>(j.as_int(5));
  EXPECT_TRUE(fractional);
  EXPECT_EQ(parse_swf(serialize_swf(log)), log);
}

TEST(Malformed, EveryCaseIsRejectedWithALineNumber) {
  int cases = 0;
  for (const auto& entry : std::filesystem::directory_iterator(testdata("swf/malformed"))) {
    ++cases;
    try {
      parse_swf(read_file(entry.path().string()));
      ADD_FAILURE() << entry.path() << " parsed";
    } catch (const ParseError& e) {
      EXPECT_NE(std::string(e.what()).find("line"), std::string::npos) << e.what();
    }
  }
  EXPECT_GE(cases, 6);
}

TEST(Malformed, ReportsTheOffendingLine) {
  try {
    parse_swf(read_file(testdata("swf/malformed/bad_line_after_good.swf")));
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("3"), std::string::npos) << e.what();
  }
}

TEST(Occupancy, FallsBackToRunTimeAndRequestedProcessors) {
  Occupancy o;
  auto j = make_swf_job(1, 100, 20, 50, 8, -1);
  ASSERT_TRUE(job_occupancy(j, o));
  EXPECT_EQ(o.start, 120);
  EXPECT_EQ(o.end, 170);
  j.fields[4] = -1;
  ASSERT_TRUE(job_occupancy(j, o));
  EXPECT_EQ(o.cores, 8);
  j.fields[3] = -1;
  EXPECT_FALSE(job_occupancy(j, o));
}

}  // namespace
}  // namespace ramp::queuesim
