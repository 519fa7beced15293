#include "delora/relabel.hpp"

#include <gtest/gtest.h>

#include <atomic>
#include <cstdio>
#include <fstream>
#include <thread>

#include "delora/relabel_http.hpp"

namespace {

using namespace delora;
using namespace delora::relabel;
using data::Sample;

Sample make_sample(std::size_t id, std::size_t truth, const std::string& text = "") {
  Sample s;
  s.id = id;
  s.features = {1.0, 2.0};
  s.observed_label = truth;
  s.true_label = truth;
  s.text = text;
  return s;
}

const std::vector<std::string> kOptions{"sports", "finance", "tech", "health"};

TEST(Prompt, ZeroShotRendersTemplate) {
  const std::string p = render_prompt(kOptions, {}, "the team won");
  EXPECT_EQ(p,
            "Below is a text classification problem.\n"
            "Note that you can only select the label in [sports, finance, tech, health].\n"
            "Let's think step by step and give your answer.\n"
            "\nSENTENCE: the team won\n\nLABEL:");
}

TEST(Prompt, FewShotHasOneBlockPerDemoPlusQuery) {
  const std::vector<Demo> demos{{"rates rose", "finance"}, {"new chip", "tech"}};
  const std::string p = render_prompt(kOptions, demos, "the team won");
  std::size_t sentences = 0;
  for (std::size_t at = p.find("SENTENCE:"); at != std::string::npos;
       at = p.find("SENTENCE:", at + 1))
    ++sentences;
  EXPECT_EQ(sentences, 3u);  // two demos + the query
  std::size_t labels = 0;
  for (std::size_t at = p.find("LABEL:"); at != std::string::npos; at = p.find("LABEL:", at + 1))
    ++labels;
  EXPECT_EQ(labels, 3u);
  // Demonstrations appear in input order, answered; the query block is last
  // and unanswered.
  EXPECT_LT(p.find("LABEL: finance"), p.find("LABEL: tech"));
  EXPECT_TRUE(p.ends_with("SENTENCE: the team won\n\nLABEL:"));
}

TEST(Prompt, RejectsDemoLabelOutsideOptions) {
  EXPECT_THROW(render_prompt(kOptions, {{"text", "weather"}}, "q"), ContractViolation);
  EXPECT_THROW(render_prompt({}, {}, "q"), ContractViolation);
}

TEST(Prompt, FeatureSummaryFallback) {
  Sample s = make_sample(3, 0);
  s.features = {0.5, -1.25};
  EXPECT_EQ(prompt_text(s), "f0=0.5 f1=-1.25");
  s.text = "actual words";
  EXPECT_EQ(prompt_text(s), "actual words");
}

TEST(ParseReply, FindsAnswerAfterFinalMarker) {
  const std::string reply =
      "Let's think. The word LABEL: could mislead, but the sentence is about markets.\n"
      "LABEL: finance";
  EXPECT_EQ(parse_label_reply(reply, kOptions), "finance");
  // Case-insensitive on both marker and option.
  EXPECT_EQ(parse_label_reply("label: FINANCE", kOptions), "finance");
  // First option after the marker wins, not option-list order.
  EXPECT_EQ(parse_label_reply("LABEL: tech (not finance)", kOptions), "tech");
  // No marker, or no option after it -> no parse.
  EXPECT_FALSE(parse_label_reply("the answer is tech", kOptions).has_value());
  EXPECT_FALSE(parse_label_reply("LABEL: none of these", kOptions).has_value());
  // The marker inside the prompt echo is ignored: only the final one counts.
  EXPECT_FALSE(parse_label_reply("LABEL: tech then LABEL:", kOptions).has_value());
}

TEST(ParseReply, LongerOptionWinsAtSamePosition) {
  const std::vector<std::string> opts{"car", "cars"};
  EXPECT_EQ(parse_label_reply("LABEL: cars", opts), "cars");
}

TEST(Oracle, PerfectAndAdversarial) {
  SyntheticOracle perfect(1.0, 7);
  SyntheticOracle hostile(0.0, 7);
  for (std::size_t id = 0; id < 200; ++id) {
    const Sample s = make_sample(id, id % 4);
    EXPECT_EQ(pseudo_label(perfect, s, kOptions), kOptions[id % 4]);
    EXPECT_NE(pseudo_label(hostile, s, kOptions), kOptions[id % 4]);
  }
  // K=2, p=0: forced complement.
  SyntheticOracle hostile2(0.0, 9);
  const std::vector<std::string> two{"a", "b"};
  EXPECT_EQ(pseudo_label(hostile2, make_sample(0, 0), two), "b");
  EXPECT_EQ(pseudo_label(hostile2, make_sample(1, 1), two), "a");
}

TEST(Oracle, AgreementConvergesToAccuracy) {
  // n = 1e4 Bernoulli(0.8): 3 sigma = 0.012.
  SyntheticOracle oracle(0.8, 1234);
  std::size_t agree = 0;
  const std::size_t n = 10000;
  for (std::size_t id = 0; id < n; ++id) {
    const Sample s = make_sample(id, id % 4);
    agree += pseudo_label(oracle, s, kOptions) == kOptions[id % 4];
  }
  EXPECT_NEAR(static_cast<double>(agree) / n, 0.8, 0.012);
}

TEST(Oracle, PureFunctionOfSeedAndSampleId) {
  SyntheticOracle a(0.5, 42), b(0.5, 42), c(0.5, 43);
  const Sample s = make_sample(11, 2);
  const std::string first = pseudo_label(a, s, kOptions);
  // Query order and demos do not matter.
  pseudo_label(a, make_sample(99, 1), kOptions);
  EXPECT_EQ(pseudo_label(a, s, kOptions), first);
  EXPECT_EQ(pseudo_label(b, s, kOptions), first);
  EXPECT_EQ(relabel_with_demos(b, s, kOptions, {{"x", "tech"}}), first);
  // Different seed can differ somewhere over many ids.
  bool differs = false;
  for (std::size_t id = 0; id < 100; ++id) {
    const Sample t = make_sample(id, 0);
    differs |= pseudo_label(b, t, kOptions) != pseudo_label(c, t, kOptions);
  }
  EXPECT_TRUE(differs);
}

TEST(Oracle, RequiresGroundTruthAndValidAccuracy) {
  SyntheticOracle oracle(0.9, 1);
  Sample s = make_sample(0, 0);
  s.true_label.reset();
  EXPECT_THROW(pseudo_label(oracle, s, kOptions), ContractViolation);
  EXPECT_THROW(SyntheticOracle(1.5, 0), ContractViolation);
}

TEST(CachedFileBackend, HitsMissesAndValidation) {
  const std::string path = testing::TempDir() + "labels_cache.json";
  {
    std::ofstream out(path);
    out << R"({"0": "tech", "5": "finance", "9": "weather"})";
  }
  CachedFile cache(path);
  EXPECT_EQ(pseudo_label(cache, make_sample(0, 1), kOptions), "tech");
  EXPECT_EQ(relabel_with_demos(cache, make_sample(5, 0), kOptions, {{"t", "tech"}}),
            "finance");
  try {
    pseudo_label(cache, make_sample(3, 0), kOptions);
    FAIL() << "expected PseudoLabelUnavailable";
  } catch (const PseudoLabelUnavailable& e) {
    EXPECT_EQ(e.sample_id(), 3u);
  }
  // Entry present but not a valid option.
  EXPECT_THROW(pseudo_label(cache, make_sample(9, 0), kOptions), PseudoLabelUnavailable);
  std::remove(path.c_str());

  EXPECT_THROW(CachedFile(testing::TempDir() + "no_such_cache.json"), ConfigError);
  const std::string bad = testing::TempDir() + "bad_cache.json";
  {
    std::ofstream out(bad);
    out << R"({"x": "tech"})";
  }
  EXPECT_THROW(CachedFile{bad}, ConfigError);
  std::remove(bad.c_str());
}

TEST(SelectDemos, OnePerClassSeededAndDegenerate) {
  data::Dataset d = data::gen_gaussian_clusters(4, 4, 5, 2.0, 3);
  std::vector<std::size_t> clean;
  for (std::size_t i = 0; i < d.size(); ++i)
    if (d.samples[i].observed_label != 3) clean.push_back(i);  // class 3 has no clean samples

  const auto demos = select_demos(d, clean, 1, 11);
  ASSERT_EQ(demos.size(), 3u);  // class 3 omitted, one each for 0..2
  EXPECT_EQ(demos[0].label, "class_0");
  EXPECT_EQ(demos[1].label, "class_1");
  EXPECT_EQ(demos[2].label, "class_2");

  const auto again = select_demos(d, clean, 1, 11);
  for (std::size_t i = 0; i < demos.size(); ++i) EXPECT_EQ(demos[i].text, again[i].text);

  const auto more = select_demos(d, clean, 10, 11);
  EXPECT_EQ(more.size(), 15u);  // classes cap at their pool size

  EXPECT_THROW(select_demos(d, {}, 1, 0), ContractViolation);
}

TEST(LabelIndexOf, MapsAndRejects) {
  EXPECT_EQ(label_index_of(kOptions, "tech", 0), 2u);
  EXPECT_THROW(label_index_of(kOptions, "weather", 7), PseudoLabelUnavailable);
}

// --- HTTP backend ----------------------------------------------------------

class HttpBackendTest : public ::testing::Test {
 protected:
  void SetUp() override {
    port_ = server_.bind_to_any_port("127.0.0.1");
    ASSERT_GT(port_, 0);
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  void TearDown() override {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  HttpLlmConfig config() {
    HttpLlmConfig cfg;
    cfg.host = "127.0.0.1";
    cfg.port = port_;
    cfg.path = "/v1/completions";
    cfg.timeout_ms = 2000;
    cfg.retries = 1;
    return cfg;
  }

  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

TEST_F(HttpBackendTest, ParsesCompletionAndSendsContract) {
  std::string seen_body;
  std::string seen_auth;
  server_.Post("/v1/completions", [&](const httplib::Request& req, httplib::Response& res) {
    seen_body = req.body;
    seen_auth = req.get_header_value("Authorization");
    res.set_content(R"({"text": "Step by step, it is about money.\nLABEL: finance"})",
                    "application/json");
  });
  setenv("DELORA_API_KEY", "sk-test-123", 1);
  HttpLlm llm(config());
  const Sample s = make_sample(4, 1, "stocks rallied");
  EXPECT_EQ(pseudo_label(llm, s, kOptions), "finance");
  unsetenv("DELORA_API_KEY");

  const nlohmann::json body = nlohmann::json::parse(seen_body);
  EXPECT_EQ(body.at("model"), "gpt-4o");
  EXPECT_EQ(body.at("temperature"), 0);
  EXPECT_NE(body.at("prompt").get<std::string>().find("SENTENCE: stocks rallied"),
            std::string::npos);
  EXPECT_EQ(seen_auth, "Bearer sk-test-123");
}

TEST_F(HttpBackendTest, RetriesThenSucceeds) {
  std::atomic<int> calls{0};
  server_.Post("/v1/completions", [&](const httplib::Request&, httplib::Response& res) {
    if (calls.fetch_add(1) == 0) {
      res.status = 500;
      return;
    }
    res.set_content(R"({"text": "LABEL: tech"})", "application/json");
  });
  HttpLlm llm(config());
  EXPECT_EQ(pseudo_label(llm, make_sample(1, 2, "chips"), kOptions), "tech");
  EXPECT_EQ(calls.load(), 2);
}

TEST_F(HttpBackendTest, ExhaustedRetriesRaisePerSampleError) {
  std::atomic<int> calls{0};
  server_.Post("/v1/completions", [&](const httplib::Request&, httplib::Response& res) {
    calls.fetch_add(1);
    res.set_content("no json here", "text/plain");
  });
  HttpLlm llm(config());
  try {
    pseudo_label(llm, make_sample(77, 0, "x"), kOptions);
    FAIL() << "expected PseudoLabelUnavailable";
  } catch (const PseudoLabelUnavailable& e) {
    EXPECT_EQ(e.sample_id(), 77u);
  }
  EXPECT_EQ(calls.load(), 2);  // 1 + retries
}

TEST_F(HttpBackendTest, UnparseableCompletionIsRetriedAndFails) {
  server_.Post("/v1/completions", [&](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"text": "I cannot decide."})", "application/json");
  });
  HttpLlm llm(config());
  EXPECT_THROW(pseudo_label(llm, make_sample(2, 0, "x"), kOptions), PseudoLabelUnavailable);
}

TEST_F(HttpBackendTest, CacheStopsRepeatCallsWithinAndAcrossRuns) {
  std::atomic<int> calls{0};
  server_.Post("/v1/completions", [&](const httplib::Request&, httplib::Response& res) {
    calls.fetch_add(1);
    res.set_content(R"({"text": "LABEL: sports"})", "application/json");
  });
  const std::string cache_path = testing::TempDir() + "llm_cache.json";
  std::remove(cache_path.c_str());

  HttpLlmConfig cfg = config();
  cfg.cache_path = cache_path;
  {
    HttpLlm llm(cfg);
    const Sample s = make_sample(10, 0, "goal!");
    EXPECT_EQ(pseudo_label(llm, s, kOptions), "sports");
    EXPECT_EQ(pseudo_label(llm, s, kOptions), "sports");
    EXPECT_EQ(calls.load(), 1);  // in-memory cache
    // Few-shot prompts differ, so the same sample costs one more call.
    EXPECT_EQ(relabel_with_demos(llm, s, kOptions, {{"rates", "finance"}}), "sports");
    EXPECT_EQ(calls.load(), 2);
  }
  {
    HttpLlm llm(cfg);  // fresh instance reads the file back
    EXPECT_EQ(pseudo_label(llm, make_sample(10, 0, "goal!"), kOptions), "sports");
    EXPECT_EQ(calls.load(), 2);  // no new network traffic
  }
  std::remove(cache_path.c_str());
}

}  // namespace
