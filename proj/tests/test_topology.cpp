#include <gtest/gtest.h>

#include <algorithm>
#include <thread>

#include "roofline/error.hpp"
#include "roofline/topology.hpp"
#include "test_support.hpp"

using namespace roofline;
using testing_support::data_dir;

namespace {

MachineTopology fixture(const std::string& name) { return discover(data_dir() / "topology" / name); }

std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(CpuList, KernelFormat) {
  EXPECT_EQ(parse_cpu_list("0-3,8,10-11"), (std::vector<int>{0, 1, 2, 3, 8, 10, 11}));
  EXPECT_EQ(parse_cpu_list("5\n"), (std::vector<int>{5}));
  EXPECT_TRUE(parse_cpu_list("").empty());
  EXPECT_THROW(parse_cpu_list("3-1"), Error);
  EXPECT_THROW(parse_cpu_list("x"), Error);
}

TEST(Discover, TwoSocketXeonFixture) {
  const auto t = fixture("xeon6248-2s");
  EXPECT_EQ(t.logical_cpus(), 80);
  EXPECT_EQ(t.sockets(), 2);
  EXPECT_EQ(t.cores(), 40);
  EXPECT_EQ(t.llc_bytes_of(0), 28160u * 1024u);
  EXPECT_EQ(t.node_of_socket(0), 0);
  EXPECT_EQ(t.node_of_socket(1), 1);
  EXPECT_EQ(t.cpus.at(21), (CpuLocation{1, 1}));
  EXPECT_TRUE(t.warnings.empty());
}

TEST(Discover, MissingNodeDirectoryMeansNodeZero) {
  const auto t = fixture("1s-4c");
  EXPECT_EQ(t.sockets(), 1);
  ASSERT_EQ(t.node_cpus.size(), 1u);
  EXPECT_EQ(t.node_cpus.at(0), (std::vector<int>{0, 1, 2, 3}));
  EXPECT_EQ(t.llc_bytes_of(0), 8192u * 1024u);
}

TEST(Discover, UnreadableRootIsAnError) {
  EXPECT_NE(error_of([] { discover("/nonexistent/roofline"); }).find("--topology"), std::string::npos);
}

TEST(Scenarios, HonourTheirDefinitions) {
  const auto t = fixture("xeon6248-2s");
  const auto st = make_scenario(t, ScenarioKind::SingleThread);
  EXPECT_EQ(st.cpu_set, std::vector<int>{0});
  EXPECT_EQ(st.mem_nodes, std::vector<int>{0});

  const auto ss = make_scenario(t, ScenarioKind::SingleSocket);
  EXPECT_EQ(ss.cpu_set.size(), 40u);  // logical CPUs, hyperthreads included
  for (int cpu : ss.cpu_set) EXPECT_EQ(t.cpus.at(cpu).socket, 0);
  EXPECT_EQ(ss.mem_nodes, std::vector<int>{0});

  ScenarioOptions per_core;
  per_core.one_thread_per_core = true;
  EXPECT_EQ(make_scenario(t, ScenarioKind::SingleSocket, per_core).cpu_set.size(), 20u);

  const auto ts = make_scenario(t, ScenarioKind::TwoSockets);
  EXPECT_EQ(ts.cpu_set.size(), 80u);
  EXPECT_EQ(ts.mem_nodes, (std::vector<int>{0, 1}));

  ScenarioOptions second;
  second.socket = 1;
  EXPECT_EQ(make_scenario(t, ScenarioKind::SingleThread, second).cpu_set, std::vector<int>{20});
}

TEST(Scenarios, TwoSocketsOnOneSocketMachineFails) {
  const auto t = fixture("1s-4c");
  const auto msg = error_of([&] { make_scenario(t, ScenarioKind::TwoSockets); });
  EXPECT_NE(msg.find("use single-socket instead"), std::string::npos) << msg;
  ScenarioOptions bad;
  bad.socket = 3;
  EXPECT_THROW(make_scenario(t, ScenarioKind::SingleSocket, bad), Error);
}

TEST(Scenarios, NamesRoundTrip) {
  for (auto k : {ScenarioKind::SingleThread, ScenarioKind::SingleSocket, ScenarioKind::TwoSockets}) {
    EXPECT_EQ(parse_scenario_kind(to_string(k)), k);
  }
  EXPECT_THROW(parse_scenario_kind("dual"), Error);
}

TEST(Pinning, ReadbackMatchesRequest) {
  const auto allowed = current_affinity();
  ASSERT_FALSE(allowed.empty());
  std::thread th([&] { EXPECT_EQ(pin_current_thread(allowed.front()), std::vector<int>{allowed.front()}); });
  th.join();
  EXPECT_THROW(pin_current_thread(-1), Error);
}

TEST(Pinning, MockRecordsPerThread) {
  MockAffinity a;
  std::thread th([&] {
    EXPECT_TRUE(a.readback().empty());
    a.pin(17);
    EXPECT_EQ(a.readback(), std::vector<int>{17});
  });
  th.join();
}

TEST(Allocation, BoundToLocalNode) {
  const auto t = discover();
  const int node = t.node_cpus.begin()->first;
  auto buf = bind_allocation(t, node, std::size_t{8} << 20);
  EXPECT_EQ(buf.size(), std::size_t{8} << 20);
  EXPECT_FALSE(buf.mock());
  EXPECT_DOUBLE_EQ(sampled_page_residency(buf, node), 1.0);
  EXPECT_THROW(bind_allocation(t, 63, 4096), Error);
}

TEST(Allocation, MockHandleCarriesNode) {
  const auto t = fixture("xeon6248-2s");
  auto buf = mock_allocation(t, 1, 1 << 20);
  EXPECT_TRUE(buf.mock());
  EXPECT_EQ(sampled_page_residency(buf, 1), 1.0);
  EXPECT_EQ(sampled_page_residency(buf, 0), 0.0);
  EXPECT_THROW(mock_allocation(t, 2, 1 << 20), Error);
}
