#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "trace/corpus.hpp"
#include "trace/table.hpp"

namespace trace {

// ============================================================================
// Prompt templates
// ============================================================================

enum class TemplateId { standard_v1, goal_aware_v2 };

struct PromptTemplate {
  TemplateId id;
  std::string body;  // exact text with {transcript_text} / {goal_text} slots
};

const PromptTemplate& prompt_template(TemplateId id);
const char* template_name(TemplateId id);
std::optional<TemplateId> template_id_from_name(std::string_view name);

// Chronological "User:" / "Model:" lines; absent text renders as an empty
// payload after the role prefix.
std::string render_transcript(const Conversation& conversation);

// Fills every placeholder; the output is otherwise byte-identical to the
// template. goal_aware_v2 requires goal_text.
std::string render_prompt(const PromptTemplate& tmpl, const Conversation& conversation);

// ============================================================================
// Judge responses
// ============================================================================

// Accepts exactly {optional whitespace, integer, optional whitespace} with the
// integer in 1..5. Anything else fails: failures are data, never repaired.
std::optional<int> parse_judge_response(std::string_view raw, std::string* error = nullptr);

struct JudgeScore {
  std::string conversation_id;
  int score = 0;  // 1..5
  TemplateId template_id = TemplateId::standard_v1;
  std::string raw_response;
};

std::map<std::string, double> scores_as_map(std::span<const JudgeScore> scores);

// ============================================================================
// Score acquisition
// ============================================================================

struct RetryPolicy {
  int max_retries = 2;
  int initial_backoff_ms = 100;
  double backoff_multiplier = 2.0;
};

// Minimal provider-agnostic wire protocol: POST {"prompt": rendered} to the
// URL, expect {"text": raw} back.
struct EndpointSource {
  std::string url;
  RetryPolicy policy;
  int parallelism = 1;  // bounded concurrent requests
  // Name of the environment variable holding the bearer credential. Only the
  // name appears in configs and logs; the value is read at request time.
  std::string credential_env;
};

struct ScoreFailure {
  std::string conversation_id;
  std::string reason;
  int attempts = 0;
};

struct ScoreAcquisition {
  std::vector<JudgeScore> scores;      // corpus order
  std::vector<ScoreFailure> failures;  // conversations left without a score
  int total_retries = 0;               // extra attempts beyond the first, all conversations
};

// Transport failures are retried per policy, then recorded as failures.
// A malformed reply body (not JSON, no "text") aborts with a body excerpt:
// that is a broken endpoint, not a judged conversation.
ScoreAcquisition acquire_scores_from_endpoint(std::span<const Conversation> corpus,
                                              TemplateId template_id,
                                              const EndpointSource& source);

// Offline mode: load a score file and require one score per corpus
// conversation, listing any uncovered ids.
std::vector<JudgeScore> acquire_scores_from_file(const std::string& path,
                                                 std::span<const Conversation> corpus);

// One JSON object per line: {"conversation_id","score","template_id","raw_response"}.
std::vector<JudgeScore> read_score_file(const std::string& path);
void write_score_file(const std::string& path, std::span<const JudgeScore> scores);

// ============================================================================
// Hybrid assembly
// ============================================================================

// Appends the llm_score column; the column set (and with it the catalog hash)
// changes, so forests trained on hybrid tables reject plain vectors.
FeatureTable assemble_hybrid_table(const FeatureTable& features,
                                   std::span<const JudgeScore> scores);

}  // namespace trace
