#include "cvd/gptjudge.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace cvd {

using nlohmann::json;

namespace {

constexpr const char* kDimensionKeys[3] = {"consistency", "visual_realism", "perceptual_quality"};

std::string score_range_text() {
  return "Scoring range: each dimension is an integer from 1 (poor) to 5 (excellent). "
         "Also give an overall total score as an integer from 3 to 15.";
}

std::string format_instruction() {
  return "Respond with exactly one JSON object and nothing else, of the form "
         "{\"consistency\": <1-5>, \"visual_realism\": <1-5>, \"perceptual_quality\": <1-5>, "
         "\"total\": <3-15>, \"reasons\": {\"consistency\": \"...\", \"visual_realism\": \"...\", "
         "\"perceptual_quality\": \"...\"}}. Explain each score in its reason before settling on it.";
}

json scores_to_json(const DimensionScores& s) {
  return json{{"consistency", s.consistency},
              {"visual_realism", s.visual_realism},
              {"perceptual_quality", s.perceptual_quality}};
}

json card_to_json(const ScoreCard& card) {
  json j = scores_to_json(card.scores);
  if (card.total) j["total"] = *card.total;
  j["reasons"] = card.reasons;
  return j;
}

std::string criteria_text(const Rubric& rubric) {
  std::ostringstream out;
  out << "Scoring criteria:";
  for (const auto& [key, text] : rubric.dimensions) out << "\n- " << key << ": " << text;
  return out.str();
}

std::string examples_text(const Rubric& rubric) {
  std::ostringstream out;
  out << "Scoring examples rated by human reviewers (" << rubric.examples.size() << "):";
  if (rubric.examples.empty()) out << "\n(none provided)";
  int k = 1;
  for (const auto& ex : rubric.examples) {
    out << "\nExample " << k++ << " [" << ex.id << "] synthesized=" << ex.pred_ref
        << " ground_truth=" << ex.gt_ref << "\n";
    for (const char* key : kDimensionKeys) {
      auto it = ex.reasons.find(key);
      if (it != ex.reasons.end()) out << "  Reasoning (" << key << "): " << it->second << "\n";
    }
    json j = scores_to_json(ex.scores);
    if (ex.total) j["total"] = *ex.total;
    j["reasons"] = ex.reasons;
    out << "  Answer: " << j.dump();
  }
  return out.str();
}

int require_int(const json& j, const char* key) {
  if (!j.contains(key)) throw Error(Errc::ParseError, std::string("missing key \"") + key + "\"");
  const json& v = j.at(key);
  if (v.is_number_integer()) return v.get<int>();
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (std::isfinite(d) && d == std::floor(d) && std::abs(d) < 1e6) return static_cast<int>(d);
  }
  throw Error(Errc::ParseError, std::string("key \"") + key + "\" is not an integer");
}

ScoreCard card_from_object(const json& j) {
  if (!j.is_object()) throw Error(Errc::ParseError, "expected a JSON object");
  ScoreCard card;
  card.scores.consistency = require_int(j, "consistency");
  card.scores.visual_realism = require_int(j, "visual_realism");
  card.scores.perceptual_quality = require_int(j, "perceptual_quality");
  for (int s : {card.scores.consistency, card.scores.visual_realism, card.scores.perceptual_quality}) {
    if (s < kMinScore || s > kMaxScore) {
      throw Error(Errc::RangeError, "score " + std::to_string(s) + " outside 1..5");
    }
  }
  if (j.contains("total") && !j.at("total").is_null()) {
    const int total = require_int(j, "total");
    if (total < kMinTotal || total > kMaxTotal) {
      throw Error(Errc::RangeError, "total " + std::to_string(total) + " outside 3..15");
    }
    card.total = total;
  }
  if (j.contains("reasons")) {
    const json& r = j.at("reasons");
    if (r.is_object()) {
      for (auto it = r.begin(); it != r.end(); ++it) {
        card.reasons[it.key()] = it.value().is_string() ? it.value().get<std::string>()
                                                        : it.value().dump();
      }
    } else if (r.is_string()) {
      card.reasons["overall"] = r.get<std::string>();
    }
  }
  return card;
}

json parse_object(std::string_view text) {
  const auto obj = first_json_object(text);
  if (!obj) throw Error(Errc::ParseError, "no JSON object in response");
  json j = json::parse(*obj, nullptr, false);
  if (j.is_discarded()) throw Error(Errc::ParseError, "malformed JSON object");
  return j;
}

bool is_inspector_prompt(const MessageList& messages) {
  return !messages.empty() && messages.front().text.find("Inspector B") != std::string::npos;
}

// FNV-1a over roles, texts and image contents.
struct Fnv {
  std::uint64_t h = 1469598103934665603ull;
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  }
  void str(const std::string& s) { bytes(s.data(), s.size()); }
};

template <typename Fn>
auto with_retries(const JudgeOptions& options, Fn&& fn) -> decltype(fn()) {
  const int attempts = std::max(1, options.retry_budget);
  auto delay = options.backoff;
  for (int attempt = 1;; ++attempt) {
    try {
      return fn();
    } catch (const Error& e) {
      const bool retryable = e.code() == Errc::TransportError || e.code() == Errc::ParseError ||
                             e.code() == Errc::RangeError;
      if (!retryable) throw;
      if (attempt >= attempts) {
        if (e.code() == Errc::TransportError) {
          throw Error(Errc::TransportError, "retry budget of " + std::to_string(attempts) +
                                                " attempts exhausted: " + e.what());
        }
        throw;
      }
      if (e.code() == Errc::TransportError && delay.count() > 0) {
        std::this_thread::sleep_for(delay);
        delay *= 2;
      }
    }
  }
}

}  // namespace

void Rubric::validate() const {
  if (dimensions.size() != 3) throw Error(Errc::InvalidArgument, "rubric needs exactly 3 dimensions");
  for (std::size_t i = 0; i < 3; ++i) {
    if (dimensions[i].first != kDimensionKeys[i]) {
      throw Error(Errc::InvalidArgument, "rubric dimension " + std::to_string(i) + " must be " +
                                             kDimensionKeys[i]);
    }
  }
}

Rubric default_rubric() {
  Rubric r;
  r.task_description =
      "Task: you judge street-view panoramas that a model synthesized from satellite imagery. "
      "You receive the synthesized panorama and the real panorama captured at the same location. "
      "Rate the synthesized panorama on three dimensions.";
  r.dimensions = {
      {"consistency",
       "How well the synthesized content matches the real panorama: building structure and "
       "texture, road layout, and other prominent landmarks."},
      {"visual_realism",
       "Whether it looks like a real street-view photo: plausible color, shape and texture, and "
       "structurally sound scene geometry."},
      {"perceptual_quality",
       "Overall image quality: sharpness, noise and artifacts, and viewing comfort."},
  };
  return r;
}

std::string_view stage_name(JudgeStage s) noexcept {
  return s == JudgeStage::EvaluatorA ? "EvaluatorA" : "InspectorB";
}

MessageList build_evaluator_prompt(const Rubric& rubric, std::shared_ptr<const Image> pred,
                                   std::shared_ptr<const Image> gt) {
  rubric.validate();
  MessageList m;
  m.push_back({"system", "task", "You act as Evaluator A. " + rubric.task_description, {}});
  m.push_back({"user", "criteria", criteria_text(rubric), {}});
  m.push_back({"user", "range", score_range_text(), {}});
  m.push_back({"user", "examples", examples_text(rubric), {}});
  m.push_back({"user", "images",
               "Image 1 is the synthesized panorama; image 2 is the real panorama.",
               {std::move(pred), std::move(gt)}});
  m.push_back({"user", "format", format_instruction(), {}});
  return m;
}

MessageList build_inspector_prompt(const Rubric& rubric, const ScoreCard& evaluator_card,
                                   std::shared_ptr<const Image> pred,
                                   std::shared_ptr<const Image> gt) {
  rubric.validate();
  MessageList m;
  m.push_back({"system", "task",
               "You act as Inspector B. Another judge, Evaluator A, has already scored this "
               "pair. " + rubric.task_description,
               {}});
  m.push_back({"user", "criteria", criteria_text(rubric), {}});
  m.push_back({"user", "range", score_range_text(), {}});
  m.push_back({"user", "evaluator",
               "Evaluator A's scores and reasons: " + card_to_json(evaluator_card).dump(), {}});
  m.push_back({"user", "images",
               "Image 1 is the synthesized panorama; image 2 is the real panorama.",
               {std::move(pred), std::move(gt)}});
  m.push_back({"user", "format",
               "Decide whether Evaluator A's scores are reasonable. If they are, reply with "
               "exactly {\"decision\": \"keep\"}. Otherwise reply with one JSON object "
               "{\"decision\": \"rescore\", \"consistency\": <1-5>, \"visual_realism\": <1-5>, "
               "\"perceptual_quality\": <1-5>, \"total\": <3-15>, \"reasons\": {...}} giving "
               "your own scores and reasons.",
               {}});
  return m;
}

std::optional<std::string> first_json_object(std::string_view text) {
  for (std::size_t start = text.find('{'); start != std::string_view::npos;
       start = text.find('{', start + 1)) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = start; i < text.size(); ++i) {
      const char c = text[i];
      if (in_string) {
        if (escaped) escaped = false;
        else if (c == '\\') escaped = true;
        else if (c == '"') in_string = false;
        continue;
      }
      if (c == '"') in_string = true;
      else if (c == '{') ++depth;
      else if (c == '}' && --depth == 0) {
        std::string candidate(text.substr(start, i - start + 1));
        if (json::accept(candidate)) return candidate;
        break;
      }
    }
  }
  return std::nullopt;
}

ScoreCard parse_scorecard(std::string_view text) {
  return card_from_object(parse_object(text));
}

std::optional<ScoreCard> parse_inspector_reply(std::string_view text) {
  const json j = parse_object(text);
  std::string decision = j.value("decision", std::string{});
  std::transform(decision.begin(), decision.end(), decision.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (decision == "keep") return std::nullopt;
  if (decision == "rescore") return card_from_object(j);
  throw Error(Errc::ParseError, "inspector decision must be \"keep\" or \"rescore\"");
}

ScoreCard run_two_stage(ChatTransport& transport, const Rubric& rubric,
                        std::shared_ptr<const Image> pred, std::shared_ptr<const Image> gt,
                        const JudgeOptions& options) {
  const MessageList first = build_evaluator_prompt(rubric, pred, gt);
  ScoreCard a = with_retries(options, [&] { return parse_scorecard(transport.send(first)); });
  a.stage = JudgeStage::EvaluatorA;

  const MessageList second = build_inspector_prompt(rubric, a, pred, gt);
  std::optional<ScoreCard> b =
      with_retries(options, [&] { return parse_inspector_reply(transport.send(second)); });

  if (!b) {
    ScoreCard kept = a;
    kept.stage = JudgeStage::InspectorB;
    kept.overridden = false;
    return kept;
  }
  b->stage = JudgeStage::InspectorB;
  b->overridden = true;
  return *b;
}

std::vector<JudgeResult> score_batch(ChatTransport& transport, const Rubric& rubric,
                                     const std::vector<JudgeItem>& items, std::size_t in_flight,
                                     const JudgeOptions& options) {
  std::vector<JudgeResult> results(items.size());
  const std::size_t width = std::max<std::size_t>(1, in_flight);
  for (std::size_t begin = 0; begin < items.size(); begin += width) {
    const std::size_t end = std::min(items.size(), begin + width);
    std::vector<std::future<void>> pending;
    for (std::size_t i = begin; i < end; ++i) {
      pending.push_back(std::async(std::launch::async, [&, i] {
        results[i].id = items[i].id;
        try {
          results[i].card = run_two_stage(transport, rubric, items[i].pred, items[i].gt, options);
        } catch (const Error& e) {
          results[i].error = e.what();
        }
      }));
    }
    for (auto& f : pending) f.get();
  }
  return results;
}

Agreement agreement(const std::vector<ScoreCard>& human, const std::vector<ScoreCard>& gpt) {
  if (human.size() != gpt.size()) {
    throw Error(Errc::LengthMismatch, std::to_string(human.size()) + " human vs " +
                                          std::to_string(gpt.size()) + " judge cards");
  }
  Agreement a;
  if (human.empty()) return a;
  auto sim = [](int h, int g, double span) { return 1.0 - std::abs(h - g) / span; };
  for (std::size_t i = 0; i < human.size(); ++i) {
    const auto& h = human[i].scores;
    const auto& g = gpt[i].scores;
    a.consistency += sim(h.consistency, g.consistency, 4.0);
    a.visual_realism += sim(h.visual_realism, g.visual_realism, 4.0);
    a.perceptual_quality += sim(h.perceptual_quality, g.perceptual_quality, 4.0);
    a.total += sim(human[i].effective_total(), gpt[i].effective_total(), 12.0);
  }
  const double n = double(human.size());
  a.consistency /= n;
  a.visual_realism /= n;
  a.perceptual_quality /= n;
  a.total /= n;
  return a;
}

std::string scorecard_json_line(const std::string& id, const ScoreCard& card) {
  json j = card_to_json(card);
  j["id"] = id;
  j["stage"] = std::string(stage_name(card.stage));
  j["overridden"] = card.overridden;
  return j.dump();
}

ScoreCard scorecard_from_json_line(std::string_view line, std::string* id) {
  const json j = json::parse(line, nullptr, false);
  if (j.is_discarded()) throw Error(Errc::ParseError, "malformed JSON line");
  ScoreCard card = card_from_object(j);
  card.stage = j.value("stage", std::string{}) == "InspectorB" ? JudgeStage::InspectorB
                                                                : JudgeStage::EvaluatorA;
  card.overridden = j.value("overridden", false);
  if (id) *id = j.value("id", std::string{});
  return card;
}

MockTransport::MockTransport(std::vector<std::optional<std::string>> evaluator_script,
                             std::vector<std::optional<std::string>> inspector_script)
    : evaluator_(evaluator_script.begin(), evaluator_script.end()),
      inspector_(inspector_script.begin(), inspector_script.end()) {}

std::uint64_t MockTransport::hash(const MessageList& messages) {
  Fnv f;
  for (const auto& m : messages) {
    f.str(m.role);
    f.str(m.text);
    for (const auto& img : m.images) {
      if (!img) continue;
      const std::size_t dims[3] = {img->height(), img->width(), img->channels()};
      f.bytes(dims, sizeof dims);
      f.bytes(img->pixels().data(), img->pixels().size() * sizeof(float));
    }
  }
  return f.h;
}

std::string MockTransport::send(const MessageList& messages) {
  const bool inspector = is_inspector_prompt(messages);
  std::optional<std::string> scripted;
  bool used_script = false;
  {
    std::lock_guard lock(mutex_);
    ++calls_;
    auto& queue = inspector ? inspector_ : evaluator_;
    if (!queue.empty()) {
      scripted = queue.front();
      queue.pop_front();
      used_script = true;
    }
  }
  if (used_script) {
    if (!scripted) throw Error(Errc::TransportError, "mock transport failure");
    return *scripted;
  }
  if (inspector) return R"({"decision": "keep"})";
  const std::uint64_t h = hash(messages);
  DimensionScores s{int(1 + h % 5), int(1 + (h >> 8) % 5), int(1 + (h >> 16) % 5)};
  json j = scores_to_json(s);
  j["total"] = s.sum();
  j["reasons"] = {{"consistency", "mock"}, {"visual_realism", "mock"}, {"perceptual_quality", "mock"}};
  return "Mock evaluation follows.\n" + j.dump();
}

std::size_t MockTransport::calls() const {
  std::lock_guard lock(mutex_);
  return calls_;
}

}  // namespace cvd
