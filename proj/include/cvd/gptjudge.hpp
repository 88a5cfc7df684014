// Two-stage multimodal judge: Evaluator A scores a synthesized panorama
// against its ground truth on a 1-5 rubric, Inspector B reviews that card and
// either keeps it or re-scores. Transport-agnostic; ships an
// OpenAI-compatible HTTPS client and a deterministic mock.
#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "cvd/core.hpp"

namespace cvd {

inline constexpr int kMinScore = 1;
inline constexpr int kMaxScore = 5;
inline constexpr int kMinTotal = 3 * kMinScore;
inline constexpr int kMaxTotal = 3 * kMaxScore;

struct ChatMessage {
  std::string role;   // "system" | "user" | "assistant"
  std::string block;  // prompt section label, not sent over the wire
  std::string text;
  std::vector<std::shared_ptr<const Image>> images;
};

using MessageList = std::vector<ChatMessage>;

class ChatTransport {
 public:
  virtual ~ChatTransport() = default;
  /// Returns the assistant text. Throws Error(TransportError) on failure.
  virtual std::string send(const MessageList& messages) = 0;
};

struct DimensionScores {
  int consistency = 0;
  int visual_realism = 0;
  int perceptual_quality = 0;

  int sum() const { return consistency + visual_realism + perceptual_quality; }
  friend bool operator==(const DimensionScores&, const DimensionScores&) = default;
};

struct IclExample {
  std::string id;
  std::string pred_ref;
  std::string gt_ref;
  DimensionScores scores;
  std::optional<int> total;
  std::map<std::string, std::string> reasons;
};

struct Rubric {
  std::string task_description;
  std::vector<std::pair<std::string, std::string>> dimensions;  // (key, criteria)
  std::vector<IclExample> examples;

  /// Exactly the three dimensions consistency, visual_realism, perceptual_quality.
  void validate() const;
};

Rubric default_rubric();

enum class JudgeStage { EvaluatorA, InspectorB };
std::string_view stage_name(JudgeStage s) noexcept;

struct ScoreCard {
  DimensionScores scores;
  /// Elicited separately from the model; not assumed to be the dimension sum.
  std::optional<int> total;
  std::map<std::string, std::string> reasons;
  JudgeStage stage = JudgeStage::EvaluatorA;
  bool overridden = false;

  /// Elicited total when present, otherwise the dimension sum.
  int effective_total() const { return total.value_or(scores.sum()); }
};

MessageList build_evaluator_prompt(const Rubric& rubric, std::shared_ptr<const Image> pred,
                                   std::shared_ptr<const Image> gt);
MessageList build_inspector_prompt(const Rubric& rubric, const ScoreCard& evaluator_card,
                                   std::shared_ptr<const Image> pred,
                                   std::shared_ptr<const Image> gt);

/// Extracts the first balanced {...} object from free text.
std::optional<std::string> first_json_object(std::string_view text);

/// Throws ParseError (no JSON object, missing or non-integer keys) or
/// RangeError (score outside 1..5, total outside 3..15).
ScoreCard parse_scorecard(std::string_view text);

/// Inspector reply: {"decision": "keep"} or {"decision": "rescore", <scorecard keys>}.
/// Returns nullopt for keep.
std::optional<ScoreCard> parse_inspector_reply(std::string_view text);

struct JudgeOptions {
  int retry_budget = 2;  // attempts per stage
  std::chrono::milliseconds backoff{500};  // doubled after each failed attempt
};

ScoreCard run_two_stage(ChatTransport& transport, const Rubric& rubric,
                        std::shared_ptr<const Image> pred, std::shared_ptr<const Image> gt,
                        const JudgeOptions& options = {});

struct JudgeItem {
  std::string id;
  std::shared_ptr<const Image> pred;
  std::shared_ptr<const Image> gt;
};

struct JudgeResult {
  std::string id;
  std::optional<ScoreCard> card;
  std::string error;  // set when card is empty
};

/// Scores items with at most `in_flight` concurrent transport conversations;
/// results keep the input order.
std::vector<JudgeResult> score_batch(ChatTransport& transport, const Rubric& rubric,
                                     const std::vector<JudgeItem>& items, std::size_t in_flight,
                                     const JudgeOptions& options = {});

struct Agreement {
  double consistency = 0, visual_realism = 0, perceptual_quality = 0, total = 0;
};

/// Mean of 1 - |h - g| / 4 per dimension; the total uses 1 - |h - g| / 12
/// over effective totals.
Agreement agreement(const std::vector<ScoreCard>& human, const std::vector<ScoreCard>& gpt);

/// One JSON object per line: {"id", "stage", "overridden", scores..., "reasons"}.
std::string scorecard_json_line(const std::string& id, const ScoreCard& card);
ScoreCard scorecard_from_json_line(std::string_view line, std::string* id = nullptr);

/// Deterministic transport. Replies are taken from the per-stage scripts in
/// order; an empty optional in a script simulates a transport failure. Once a
/// script is exhausted, replies are derived from a hash of the messages:
/// evaluator scores in 1..5, inspector always keeps.
class MockTransport : public ChatTransport {
 public:
  MockTransport() = default;
  MockTransport(std::vector<std::optional<std::string>> evaluator_script,
                std::vector<std::optional<std::string>> inspector_script);

  std::string send(const MessageList& messages) override;

  std::size_t calls() const;
  static std::uint64_t hash(const MessageList& messages);

 private:
  mutable std::mutex mutex_;
  std::deque<std::optional<std::string>> evaluator_;
  std::deque<std::optional<std::string>> inspector_;
  std::size_t calls_ = 0;
};

struct HttpTransportConfig {
  std::string endpoint = "https://api.openai.com/v1/chat/completions";
  std::string model = "gpt-4o";
  std::string api_key;
  double temperature = 0.0;
  std::chrono::seconds timeout{120};
};

/// OpenAI-compatible chat-completions client; images are sent as base64 PNG data URLs.
class HttpTransport : public ChatTransport {
 public:
  explicit HttpTransport(HttpTransportConfig config);
  std::string send(const MessageList& messages) override;

  /// Request body for `messages` (exposed for inspection and tests).
  std::string request_body(const MessageList& messages) const;

 private:
  HttpTransportConfig config_;
};

std::string base64_encode(const std::vector<std::uint8_t>& bytes);

}  // namespace cvd
