// Copyright 2026 The svcid Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

#include <doctest.h>

#include "svcid/error.hpp"
#include "svcid_cli/cli.hpp"
#include "svcid_cli/records.hpp"

using namespace svcid;
using namespace svcid::cli;

namespace fs = std::filesystem;

namespace {

const std::string kMixed = std::string(SVCID_SCENARIO_DIR) + "/mixed.toml";

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("svcid_cli_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }

  std::string write(const std::string& name, const std::string& content) const {
    const fs::path p = path_ / name;
    std::ofstream(p) << content;
    return p.string();
  }
  std::string path(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

ParseOutcome parse(std::initializer_list<std::string> args) { return parse_args(args); }

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run run_args(std::initializer_list<std::string> args) {
  Run r;
  const auto parsed = parse_args(args);
  if (!parsed.config) {
    r.code = parsed.exit_code;
    r.out = parsed.out;
    r.err = parsed.err;
    return r;
  }
  std::ostringstream out, err;
  r.code = run(*parsed.config, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::vector<Json> lines(const std::string& text) {
  std::istringstream in(text);
  return read_jsonl(in);
}

}  // namespace

TEST_CASE("version and usage errors") {
  const auto v = parse({"--version"});
  CHECK_FALSE(v.config);
  CHECK(v.exit_code == kExitOk);
  CHECK(v.out.find(kVersion) != std::string::npos);

  CHECK(parse({}).exit_code == kExitUsage);
  CHECK(parse({"frobnicate"}).exit_code == kExitUsage);
  CHECK(parse({"scan"}).exit_code == kExitUsage);
  // Live scanning needs a source address.
  CHECK(parse({"scan", "targets.txt"}).exit_code == kExitUsage);
  CHECK(parse({"deduce", "targets.txt"}).exit_code == kExitUsage);
  CHECK(parse({"scan", "-", "--sim", kMixed, "--wildcard-ports", "3"}).exit_code == kExitUsage);
  CHECK(parse({"scan", "-", "--sim", kMixed, "--adopt"}).exit_code == kExitUsage);
}

TEST_CASE("parsed options") {
  const auto plan = parse({"scan", "-", "--plan-only", "--port", "8080", "--handshakes", "wait,http"});
  REQUIRE(plan.config);
  CHECK(plan.config->plan_only);
  CHECK(plan.config->port == std::optional<std::uint16_t>(8080));
  CHECK(plan.config->handshakes == std::optional<std::string>("wait,http"));

  const auto sim = parse({"simulate", kMixed, "--seed", "9", "--format", "table"});
  REQUIRE(sim.config);
  CHECK(sim.config->command == Command::kSimulate);
  CHECK(sim.config->scenario == std::optional<std::string>(kMixed));
  CHECK(sim.config->wildcard_ports == 5);
  CHECK(sim.config->seed == 9);
  CHECK(sim.config->format == Format::kTable);

  const auto sim0 = parse({"simulate", kMixed, "--wildcard-ports", "0"});
  REQUIRE(sim0.config);
  CHECK(sim0.config->wildcard_ports == 0);

  const auto deduce = parse({"deduce", "-", "--source-ip", "192.0.2.1", "--budget", "4", "--evidence"});
  REQUIRE(deduce.config);
  CHECK(deduce.config->retransmit_budget == 4);
  CHECK(deduce.config->evidence);
}

TEST_CASE("record json round trip") {
  ScanRecord r;
  r.seq = 4;
  r.ip = Ipv4(10, 1, 2, 3);
  r.port = 8081;
  r.outcome = Outcome::kAckHost;
  r.refined_state = RefinedState::kAcknowledgesData;
  r.behavior.kind = BehaviorKind::kNoDefenseObserved;
  r.identified_protocol = "ssh";
  r.matched_by = MatchedBy::kRegistrySweep;
  r.handshakes_attempted = 2;
  r.wall_time = std::chrono::microseconds(1500);

  const Json j = record_to_json(r);
  const std::string line = record_to_jsonl(r);
  CHECK(line.find('\n') == std::string::npos);
  CHECK(line.rfind("{\"seq\":4,\"ip\":\"10.1.2.3\",\"port\":8081,", 0) == 0);
  CHECK(j["ms"] == 1.5);
  CHECK(j["matched_by"] == "RegistrySweep");
  CHECK_FALSE(j.contains("error"));

  const ScanRecord back = record_from_json(Json::parse(line));
  CHECK(back.seq == 4);
  CHECK(back.ip == r.ip);
  CHECK(back.port == r.port);
  CHECK(back.outcome == r.outcome);
  CHECK(back.refined_state == r.refined_state);
  CHECK(back.identified_protocol == r.identified_protocol);
  CHECK(back.handshakes_attempted == 2);

  CHECK_THROWS_AS(record_from_json(Json::parse(R"({"ip":"10.0.0.1","port":80})")), Error);
  CHECK_THROWS_AS(record_from_json(Json::parse(R"({"ip":"nope","port":80,"outcome":"AckHost",
                                                   "refined_state":"AcknowledgesData"})")),
                  Error);
}

TEST_CASE("target lists") {
  std::istringstream in("# header\n10.0.0.1,80\n10.0.0.2:443\n10.0.0.3 22  # ssh\n\n10.0.0.4\n");
  const auto targets = read_targets(in, 8080);
  REQUIRE(targets.size() == 4);
  CHECK(targets[0].port == 80);
  CHECK(targets[1].port == 443);
  CHECK(targets[2].ip == Ipv4(10, 0, 0, 3));
  CHECK(targets[2].port == 22);
  CHECK(targets[3].port == 8080);

  std::istringstream bare("10.0.0.4\n");
  CHECK_THROWS_AS(read_targets(bare, std::nullopt), Error);
  std::istringstream bad("10.0.0.1,80\n10.0.0.300,80\n");
  try {
    read_targets(bad, std::nullopt);
    FAIL("accepted a bad address");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kParse);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("adoption csv") {
  std::istringstream in(
      "saddr,sport,daddr,dport,seqnum,acknum,window\n"
      "10.0.0.9,80,192.0.2.1,40000,1000,5001,29200\n");
  const auto segs = read_adopt_csv(in);
  REQUIRE(segs.size() == 1);
  CHECK(segs[0].src_ip == Ipv4(10, 0, 0, 9));
  CHECK(segs[0].src_port == 80);
  CHECK(segs[0].dst_port == 40000);
  CHECK(segs[0].seq == 1000);
  CHECK(segs[0].ack == 5001);
  CHECK(segs[0].window == 29200);
  CHECK(segs[0].flags.synack());
  std::istringstream bad("10.0.0.9,80,192.0.2.1\n");
  CHECK_THROWS_AS(read_adopt_csv(bad), Error);
}

TEST_CASE("simulate is deterministic and labels the scenario") {
  TempDir dir;
  const auto a = run_args({"simulate", kMixed, "--log", dir.path("a.log")});
  const auto b = run_args({"simulate", kMixed, "--log", dir.path("b.log")});
  CHECK(a.code == kExitOk);
  CHECK(a.out == b.out);
  const auto records = lines(a.out);
  CHECK(records.size() == 53);
  std::ifstream la(dir.path("a.log")), lb(dir.path("b.log"));
  std::stringstream sa, sb;
  sa << la.rdbuf();
  sb << lb.rdbuf();
  CHECK_FALSE(sa.str().empty());
  CHECK(sa.str() == sb.str());

  const auto other = run_args({"simulate", kMixed, "--seed", "2", "--log", dir.path("c.log")});
  CHECK(other.code == kExitOk);
}

TEST_CASE("scan against a scenario, then stats") {
  TempDir dir;
  const auto targets = dir.write("t.txt", "10.1.0.1\n10.1.1.1,22\n10.2.0.1\n");
  const auto scan = run_args({"scan", targets, "--sim", kMixed, "--port", "80", "--source-ip", "192.0.2.1"});
  REQUIRE(scan.code == kExitOk);
  const auto records = lines(scan.out);
  REQUIRE(records.size() == 3);
  std::map<std::string, Json> by_ip;
  for (const auto& r : records) by_ip[r["ip"].get<std::string>()] = r;
  CHECK(by_ip["10.1.0.1"]["protocol"] == "http");
  CHECK(by_ip["10.1.1.1"]["protocol"] == "ssh");
  CHECK(by_ip["10.2.0.1"]["behavior"] == "ZeroWindowProtection");

  const auto jsonl = dir.write("r.jsonl", scan.out);
  const auto stats = run_args({"stats", jsonl});
  REQUIRE(stats.code == kExitOk);
  const auto rows = lines(stats.out);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0]["port"] == 22);
  CHECK(rows[1]["port"] == 80);
  CHECK(rows[1]["synack"] == 2);
  CHECK(rows[1]["ack_data"] == 1);

  const auto plan = run_args({"scan", targets, "--plan-only", "--port", "80"});
  REQUIRE(plan.code == kExitOk);
  const auto plans = lines(plan.out);
  REQUIRE(plans.size() == 3);
  CHECK(plans[1]["plan"][0] == "ssh");
}

TEST_CASE("order and popularity") {
  TempDir dir;
  const auto matrix = dir.write("m.csv", "service,wait,http,tls\na,1,0,0\nb,1,1,0\nc,0,0,1\nd,0,1,0\n");
  const auto order = run_args({"order", matrix, "-k", "2"});
  REQUIRE(order.code == kExitOk);
  const auto steps = lines(order.out);
  REQUIRE(steps.size() == 2);
  CHECK(steps[0]["handshake"] == "http");
  CHECK(steps[1]["handshake"] == "tls");
  CHECK(steps[1]["cumulative"] == 0.75);

  std::string csv = "port,count\n";
  for (int p = 1; p <= 5; ++p) csv += std::to_string(p) + ",1\n";
  csv += "99,1000\n";
  const auto counts = dir.write("p.csv", csv);
  const auto pop = run_args({"stats", "-", "--popularity", counts});
  REQUIRE(pop.code == kExitOk);
  const auto rows = lines(pop.out);
  REQUIRE(rows.size() == 6);
  for (const auto& r : rows) CHECK(r["popular"] == (r["port"] == 99));
}

TEST_CASE("classify with two-source probes") {
  TempDir dir;
  const auto verdicts = dir.write(
      "v.jsonl",
      R"({"ip":"10.0.0.4","port":80,"refined_state":"NeverSynAcked"})"
      "\n"
      R"({"ip":"10.0.0.5","port":80,"refined_state":"NeverSynAcked"})"
      "\n"
      R"({"ip":"10.0.0.9","port":80,"refined_state":"EstablishedNoAck"})"
      "\n"
      R"({"ip":"10.0.0.10","port":80,"refined_state":"ZeroWindowNeverOpened"})"
      "\n");
  const auto probes = dir.write(
      "p.jsonl",
      R"({"ip":"10.0.0.4","port":80,"used":"Silence","fresh":"SynAck"})"
      "\n"
      R"({"ip":"10.0.0.5","port":80,"used":"Rst","fresh":"SynAck"})"
      "\n"
      R"({"ip":"10.0.0.9","port":80,"used":"SynAck","fresh":"SynAck"})"
      "\n");
  const auto r = run_args({"classify", verdicts, "--probes", probes});
  REQUIRE(r.code == kExitOk);
  const auto rows = lines(r.out);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0]["behavior"] == "ConnectionShunning");
  CHECK(rows[0]["granularity_hint"] == "Network");
  CHECK(rows[1]["behavior"] == "ConnectionShunning");
  CHECK(rows[2]["behavior"] == "NoDefenseObserved");
  CHECK(rows[3]["behavior"] == "ZeroWindowProtection");
}

TEST_CASE("input errors are usage errors") {
  TempDir dir;
  CHECK(run_args({"stats", dir.path("missing.jsonl")}).code == kExitUsage);
  const auto junk = dir.write("junk.jsonl", "{not json\n");
  CHECK(run_args({"stats", junk}).code == kExitUsage);
  const auto matrix = dir.write("m.csv", "wait,http\n1,1\n");
  CHECK(run_args({"order", matrix, "-k", "5"}).code == kExitUsage);
}

TEST_CASE("binary reports its version") {
  const std::string cmd = std::string("\"") + SVCID_BINARY + "\" --version > /dev/null";
  CHECK(std::system(cmd.c_str()) == 0);
  const std::string bad = std::string("\"") + SVCID_BINARY + "\" scan > /dev/null 2>&1";
  const int status = std::system(bad.c_str());
  CHECK(WEXITSTATUS(status) == kExitUsage);
}

TEST_CASE("table totals agree with the JSONL aggregation") {
  TempDir dir;
  const auto jsonl = run_args({"simulate", kMixed, "--log", dir.path("a.log")});
  const auto table = run_args({"simulate", kMixed, "--log", dir.path("b.log"), "--format", "table"});
  REQUIRE(jsonl.code == kExitOk);
  REQUIRE(table.code == kExitOk);
  const auto stats = run_args({"stats", dir.write("r.jsonl", jsonl.out)});
  REQUIRE(stats.code == kExitOk);

  // The aggregate is the last block of the table output.
  const auto block = table.out.substr(table.out.rfind("\n\n") + 2);
  std::istringstream in(block);
  std::string line;
  std::getline(in, line);
  CHECK(line.rfind("port", 0) == 0);
  std::vector<Json> parsed;
  while (std::getline(in, line)) {
    std::istringstream cells(line);
    unsigned port = 0, synack = 0, ack = 0, l7 = 0, unexpected = 0;
    cells >> port >> synack >> ack >> l7 >> unexpected;
    Json j;
    j["port"] = port;
    j["synack"] = synack;
    j["ack_data"] = ack;
    j["l7_expected"] = l7;
    j["unexpected"] = unexpected;
    parsed.push_back(j);
  }
  CHECK(parsed == lines(stats.out));
}

TEST_CASE("order accepts the long form of k") {
  const auto p = parse({"order", "m.csv", "--k", "5"});
  REQUIRE(p.config);
  CHECK(p.config->k == std::optional<std::size_t>(5));
}

TEST_CASE("empty input yields no output") {
  TempDir dir;
  const auto r = run_args({"stats", dir.write("empty.jsonl", "")});
  CHECK(r.code == kExitOk);
  CHECK(r.out.empty());
}
