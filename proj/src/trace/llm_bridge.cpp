#include "trace/llm_bridge.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <chrono>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "trace/error.hpp"

namespace trace {

using ordered_json = nlohmann::ordered_json;

// ============================================================================
// Templates
// ============================================================================

namespace {

// Several source lines end in a literal space before the newline; the bodies
// are kept in escaped form so stray editors cannot strip them.
// clang-format off
const PromptTemplate kStandardV1{TemplateId::standard_v1,
"You are an impartial and objective evaluator of user satisfaction in \n"
"conversational AI interactions.\n"
"Your task is to carefully review the following transcript of an interaction \n"
"between a User and an AI Model.\n"
"Based ONLY on this transcript, provide a numerical rating representing the \n"
"User's likely satisfaction with the interaction.\n"
"\n"
"Use the following 1-5 scale:\n"
"1: Very dissatisfied\n"
"2: Somewhat dissatisfied\n"
"3: Neither satisfied nor dissatisfied\n"
"4: Somewhat satisfied\n"
"5: Very satisfied\n"
"\n"
"When making your assessment, consider factors such as:\n"
"- Was the AI Model's response relevant to the User's prompts?\n"
"- Did the AI Model seem to understand the User's intent?\n"
"- Was the User likely to achieve their goal by the end of the interaction?\n"
"- Was the interaction efficient, or did the User have to struggle?\n"
"- Was the AI Model polite and the tone appropriate?\n"
"\n"
"Your response MUST be a single integer from 1 to 5 only. Do not provide \n"
"any explanation, additional text, or punctuation.\n"
"\n"
"TRANSCRIPT:\n"
"{transcript_text}\n"
"\n"
"SATISFACTION SCORE (1-5):"};

const PromptTemplate kGoalAwareV2{TemplateId::goal_aware_v2,
"You are an impartial and objective evaluator of user satisfaction in \n"
"conversational AI interactions.\n"
"Your task is to carefully review the following transcript of an interaction \n"
"between a User and an AI Model, along with the User's stated goal.\n"
"Based on this information, provide a numerical rating representing the \n"
"User's likely satisfaction with the interaction.\n"
"\n"
"When making your assessment, pay special attention to whether the AI model \n"
"helped the user accomplish their stated goal.\n"
"\n"
"USER'S GOAL:\n"
"{goal_text}\n"
"\n"
"Use the following 1-5 scale:\n"
"1: Very dissatisfied\n"
"2: Somewhat dissatisfied\n"
"3: Neither satisfied nor dissatisfied\n"
"4: Somewhat satisfied\n"
"5: Very satisfied\n"
"\n"
"Your response MUST be a single integer from 1 to 5 only. Do not provide \n"
"any explanation, additional text, or punctuation.\n"
"\n"
"TRANSCRIPT:\n"
"{transcript_text}\n"
"\n"
"SATISFACTION SCORE (1-5):"};
// clang-format on

std::string replace_all(std::string text, const std::string& slot, const std::string& value) {
  std::size_t pos = 0;
  while ((pos = text.find(slot, pos)) != std::string::npos) {
    text.replace(pos, slot.size(), value);
    pos += value.size();
  }
  return text;
}

}  // namespace

const PromptTemplate& prompt_template(TemplateId id) {
  return id == TemplateId::standard_v1 ? kStandardV1 : kGoalAwareV2;
}

const char* template_name(TemplateId id) {
  return id == TemplateId::standard_v1 ? "standard_v1" : "goal_aware_v2";
}

std::optional<TemplateId> template_id_from_name(std::string_view name) {
  if (name == "standard_v1") return TemplateId::standard_v1;
  if (name == "goal_aware_v2") return TemplateId::goal_aware_v2;
  return std::nullopt;
}

std::string render_transcript(const Conversation& conversation) {
  std::string out;
  for (std::size_t i = 0; i < conversation.turns.size(); ++i) {
    if (i > 0) out += '\n';
    out += conversation.turns[i].role == Role::user ? "User: " : "Model: ";
    if (conversation.turns[i].text) out += *conversation.turns[i].text;
  }
  return out;
}

std::string render_prompt(const PromptTemplate& tmpl, const Conversation& conversation) {
  std::string body = tmpl.body;
  if (tmpl.id == TemplateId::goal_aware_v2) {
    if (!conversation.goal_text) {
      throw DataError("goal_aware_v2 needs goal_text on conversation '" +
                      conversation.conversation_id + "'");
    }
    body = replace_all(std::move(body), "{goal_text}", *conversation.goal_text);
  }
  return replace_all(std::move(body), "{transcript_text}", render_transcript(conversation));
}

// ============================================================================
// Response parsing
// ============================================================================

std::optional<int> parse_judge_response(std::string_view raw, std::string* error) {
  const auto is_space = [](char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
  };
  std::size_t begin = 0, end = raw.size();
  while (begin < end && is_space(raw[begin])) ++begin;
  while (end > begin && is_space(raw[end - 1])) --end;
  const std::string_view core = raw.substr(begin, end - begin);

  if (core.empty()) {
    if (error) *error = "empty response";
    return std::nullopt;
  }
  if (!std::all_of(core.begin(), core.end(),
                   [](char c) { return c >= '0' && c <= '9'; })) {
    if (error) *error = "expected a lone integer, got '" + std::string(raw) + "'";
    return std::nullopt;
  }
  // The accepted language is exactly one digit in 1..5 with optional
  // surrounding whitespace. Other all-digit strings are distinguished only in
  // the failure message (out-of-range integer vs malformed token).
  if (core.size() == 1 && core[0] >= '1' && core[0] <= '5') return core[0] - '0';
  long value = 0;
  const auto res = std::from_chars(core.data(), core.data() + core.size(), value);
  if (res.ec == std::errc() && res.ptr == core.data() + core.size() &&
      (value < 1 || value > 5)) {
    if (error) *error = "score " + std::to_string(value) + " outside 1..5";
  } else {
    if (error) *error = "expected a single digit 1-5, got '" + std::string(core) + "'";
  }
  return std::nullopt;
}

std::map<std::string, double> scores_as_map(std::span<const JudgeScore> scores) {
  std::map<std::string, double> out;
  for (const JudgeScore& s : scores) out[s.conversation_id] = static_cast<double>(s.score);
  return out;
}

// ============================================================================
// Endpoint acquisition
// ============================================================================

namespace {

struct ParsedUrl {
  std::string base;  // scheme://host[:port]
  std::string path;  // /...
};

ParsedUrl parse_url(const std::string& url) {
  const std::size_t scheme = url.find("://");
  if (scheme == std::string::npos) throw DataError("endpoint URL needs a scheme: " + url);
  const std::size_t slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

}  // namespace

ScoreAcquisition acquire_scores_from_endpoint(std::span<const Conversation> corpus,
                                              TemplateId template_id,
                                              const EndpointSource& source) {
  const ParsedUrl url = parse_url(source.url);
  const PromptTemplate& tmpl = prompt_template(template_id);
  const int threads = std::max(1, source.parallelism);

  httplib::Headers headers;
  if (!source.credential_env.empty()) {
    const char* value = std::getenv(source.credential_env.c_str());
    if (!value || !*value) {
      throw DataError("credential environment variable '" + source.credential_env +
                      "' is not set");
    }
    headers.emplace("Authorization", std::string("Bearer ") + value);
  }

  struct Slot {
    std::optional<JudgeScore> score;
    std::optional<ScoreFailure> failure;
    std::string hard_error;
    int retries = 0;
  };
  std::vector<Slot> slots(corpus.size());

#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(corpus.size()); ++i) {
    const Conversation& conv = corpus[static_cast<std::size_t>(i)];
    Slot& slot = slots[static_cast<std::size_t>(i)];
    try {
      const std::string prompt = render_prompt(tmpl, conv);
      ordered_json request;
      request["prompt"] = prompt;
      const std::string payload = request.dump();

      std::string transport_error;
      int attempts = 0;
      double backoff = source.policy.initial_backoff_ms;
      for (int attempt = 0; attempt <= source.policy.max_retries; ++attempt) {
        ++attempts;
        if (attempt > 0) {
          ++slot.retries;
          std::this_thread::sleep_for(
              std::chrono::milliseconds(static_cast<std::int64_t>(backoff)));
          backoff *= source.policy.backoff_multiplier;
        }
        httplib::Client client(url.base);
        client.set_connection_timeout(10, 0);
        client.set_read_timeout(60, 0);
        const httplib::Result res =
            client.Post(url.path, headers, payload, "application/json");
        if (!res) {
          transport_error = "transport error: " + httplib::to_string(res.error());
          continue;
        }
        if (res->status != 200) {
          transport_error = "HTTP status " + std::to_string(res->status);
          continue;
        }
        ordered_json reply;
        try {
          reply = ordered_json::parse(res->body);
        } catch (const ordered_json::parse_error&) {
          throw DataError("malformed endpoint reply (not JSON): " + res->body.substr(0, 200));
        }
        if (!reply.is_object() || !reply.contains("text") || !reply["text"].is_string()) {
          throw DataError("malformed endpoint reply (no \"text\" field): " +
                          res->body.substr(0, 200));
        }
        const std::string raw = reply["text"].get<std::string>();
        std::string why;
        const std::optional<int> score = parse_judge_response(raw, &why);
        if (!score) {
          slot.failure = ScoreFailure{conv.conversation_id, "unparseable response: " + why,
                                      attempts};
        } else {
          slot.score = JudgeScore{conv.conversation_id, *score, template_id, raw};
        }
        transport_error.clear();
        break;
      }
      if (!transport_error.empty()) {
        slot.failure = ScoreFailure{conv.conversation_id, transport_error, attempts};
      }
    } catch (const std::exception& e) {
      slot.hard_error = e.what();
    }
  }

  ScoreAcquisition result;
  for (Slot& slot : slots) {
    if (!slot.hard_error.empty()) throw DataError(slot.hard_error);
    if (slot.score) result.scores.push_back(std::move(*slot.score));
    if (slot.failure) result.failures.push_back(std::move(*slot.failure));
    result.total_retries += slot.retries;
  }
  return result;
}

// ============================================================================
// Score files
// ============================================================================

std::vector<JudgeScore> read_score_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open score file '" + path + "'");
  std::vector<JudgeScore> scores;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const ordered_json::parse_error& e) {
      throw DataError("score file line " + std::to_string(line_no) + ": " + e.what());
    }
    JudgeScore s;
    try {
      s.conversation_id = j.at("conversation_id").get<std::string>();
      s.score = j.at("score").get<int>();
      if (j.contains("template_id")) {
        const auto id = template_id_from_name(j["template_id"].get<std::string>());
        if (!id) throw DataError("unknown template_id");
        s.template_id = *id;
      }
      if (j.contains("raw_response")) s.raw_response = j["raw_response"].get<std::string>();
    } catch (const ordered_json::exception& e) {
      throw DataError("score file line " + std::to_string(line_no) + ": " + e.what());
    }
    if (s.score < 1 || s.score > 5) {
      throw DataError("score file line " + std::to_string(line_no) + ": score " +
                      std::to_string(s.score) + " outside 1..5");
    }
    scores.push_back(std::move(s));
  }
  return scores;
}

void write_score_file(const std::string& path, std::span<const JudgeScore> scores) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  for (const JudgeScore& s : scores) {
    ordered_json j;
    j["conversation_id"] = s.conversation_id;
    j["score"] = s.score;
    j["template_id"] = template_name(s.template_id);
    j["raw_response"] = s.raw_response;
    out << j.dump() << '\n';
  }
  if (!out) throw DataError("failed writing '" + path + "'");
}

std::vector<JudgeScore> acquire_scores_from_file(const std::string& path,
                                                 std::span<const Conversation> corpus) {
  const std::vector<JudgeScore> scores = read_score_file(path);
  std::map<std::string, const JudgeScore*> by_id;
  for (const JudgeScore& s : scores) by_id[s.conversation_id] = &s;
  std::vector<std::string> missing;
  for (const Conversation& c : corpus) {
    if (!by_id.count(c.conversation_id)) missing.push_back(c.conversation_id);
  }
  if (!missing.empty()) {
    std::ostringstream os;
    os << "score file '" << path << "' does not cover " << missing.size()
       << " conversation(s):";
    for (const std::string& id : missing) os << ' ' << id;
    throw DataError(os.str());
  }
  // Return in corpus order so downstream artifacts are deterministic.
  std::vector<JudgeScore> ordered;
  ordered.reserve(corpus.size());
  for (const Conversation& c : corpus) ordered.push_back(*by_id.at(c.conversation_id));
  return ordered;
}

// ============================================================================
// Hybrid assembly
// ============================================================================

FeatureTable assemble_hybrid_table(const FeatureTable& features,
                                   std::span<const JudgeScore> scores) {
  if (features.column_index("llm_score")) {
    throw DataError("table already carries an llm_score column");
  }
  std::map<std::string, double> by_id;
  for (const JudgeScore& s : scores) by_id[s.conversation_id] = static_cast<double>(s.score);

  std::vector<std::string> missing;
  for (const TableRow& row : features.rows) {
    if (!by_id.count(row.conversation_id)) missing.push_back(row.conversation_id);
  }
  if (!missing.empty()) {
    std::ostringstream os;
    os << "judge scores do not cover " << missing.size() << " row(s):";
    for (const std::string& id : missing) os << ' ' << id;
    throw DataError(os.str());
  }

  FeatureTable hybrid = features;
  hybrid.columns.push_back("llm_score");
  for (TableRow& row : hybrid.rows) {
    row.values.emplace_back(by_id.at(row.conversation_id));
  }
  return hybrid;
}

}  // namespace trace
