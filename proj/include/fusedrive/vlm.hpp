// Copyright 2026 The fusedrive Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fusedrive/bundle.hpp"
#include "fusedrive/refinement.hpp"

namespace fusedrive {

inline constexpr const char* kDefaultTokenEnv = "FUSEDRIVE_VLM_TOKEN";

// The three enrichment questions, asked in this order.
inline constexpr const char* kQuestionObjects = "What objects are shown in this image?";
inline constexpr const char* kQuestionRelevant =
    "Which objects among them are most matter for driving car?";
inline constexpr const char* kQuestionDetails = "What are the details of each object?";

struct RetryPolicy {
  std::size_t max_attempts = 3;
  double backoff_s = 1.0;  // doubled after every failed attempt
};

struct VlmEndpointConfig {
  std::string base_url;  // e.g. "https://host/v1"; requests go to <base>/chat/completions
  std::string model = "gpt-4-vision-preview";
  std::string token_env = kDefaultTokenEnv;
  double timeout_s = 60.0;
  RetryPolicy retry;
  // Offline mode: canned answers are read from here and no network is used.
  std::optional<std::filesystem::path> mock_dir;

  bool mock() const { return mock_dir.has_value(); }
  // kConfig unless exactly one of base_url / mock_dir is set.
  void Validate() const;
};

struct ChatMessage {
  std::string role;  // "user" or "assistant"
  std::string text;
  std::optional<std::string> image_ref;
};

struct ChatTurn {
  ChatMessage message;
  std::string timestamp;
};

struct ChatTranscript {
  std::string sample_id;
  std::string phase;  // "enrich" or "pseudo"
  std::string prompt_hash;
  bool complete = false;
  std::vector<ChatTurn> turns;

  std::size_t count(const std::string& role) const;
  std::vector<ChatMessage> messages() const;
};

// Text container, one file per (sample, phase):
//   fusedrive-transcript 1
//   sample <id>
//   phase <phase>
//   prompt-hash <hex>
//   complete <0|1>
//   turns <n>
//   then per turn: "turn <role> <timestamp> <bytes of image ref> <bytes of text>\n"
//   followed by the image ref bytes, the text bytes and "\n".
std::string EncodeTranscript(const ChatTranscript& transcript);
ChatTranscript DecodeTranscript(const std::string& bytes);
std::filesystem::path TranscriptPath(const std::filesystem::path& cache_dir,
                                     const std::string& sample_id,
                                     const std::string& phase);

// Which question a request answers; mock backends key canned files on it.
struct ChatRequest {
  std::string sample_id;
  std::string step;  // "enrich_q1", "enrich_q2", "enrich_q3" or "pseudo"
  std::vector<ChatMessage> messages;
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  // Returns the assistant reply or throws (kTransport, kParse).
  virtual std::string complete(const ChatRequest& request) = 0;
  virtual std::string timestamp(std::size_t turn_index) const = 0;
  std::size_t calls() const { return calls_.load(); }

 protected:
  std::atomic<std::size_t> calls_{0};
};

// Reads <mock_dir>/<sample_id>/<step>.txt, falling back to
// <mock_dir>/_default/<step>.txt. Timestamps are logical ("step-0001").
class MockBackend : public ChatBackend {
 public:
  explicit MockBackend(std::filesystem::path dir);
  std::string complete(const ChatRequest& request) override;
  std::string timestamp(std::size_t turn_index) const override;

 private:
  std::filesystem::path dir_;
};

// Chat-completion client over HTTP(S). Throws kConfig from the constructor
// when the token variable is unset.
class HttpBackend : public ChatBackend {
 public:
  explicit HttpBackend(VlmEndpointConfig config);
  std::string complete(const ChatRequest& request) override;
  std::string timestamp(std::size_t turn_index) const override;

  // Request body for `messages`; images are inlined as base64 data URLs.
  std::string RequestBody(const std::vector<ChatMessage>& messages) const;

 private:
  VlmEndpointConfig config_;
  std::string token_;
  std::string host_;  // scheme://host[:port]
  std::string path_;  // <base path>/chat/completions
};

std::unique_ptr<ChatBackend> MakeBackend(const VlmEndpointConfig& config);

// Line/list grammar: one item per line after stripping bullets ("-", "*",
// "1.", "2)") and markdown emphasis; a single line is split on commas and a
// final "and". Header lines ending in ':' are skipped and an answer of
// "none" (or "no objects") is empty.
std::vector<std::string> ParseList(const std::string& answer);

struct EnrichmentResult {
  std::string sample_id;
  std::vector<std::string> objects;
  std::vector<std::string> relevant_objects;
  std::vector<std::string> descriptions;  // at most s
};

std::string EnrichmentToJson(const EnrichmentResult& result);
EnrichmentResult EnrichmentFromJson(const std::string& text);

struct EnrichmentOutcome {
  EnrichmentResult result;
  ChatTranscript transcript;
  bool cache_hit = false;
};

// Runs Q1 -> Q2 -> Q3, each question carrying the previous turns. The
// transcript is written to the cache after every answer. A complete cached
// transcript with a matching prompt hash is reused with no backend call.
EnrichmentOutcome enrich_sample(const std::string& sample_id, const std::string& image_ref,
                                std::size_t s, ChatBackend& backend,
                                const std::optional<std::filesystem::path>& cache_dir);

// Builds an EnrichmentResult from the three answers.
EnrichmentResult ParseEnrichment(const std::string& sample_id, const std::string& a1,
                                 const std::string& a2, const std::string& a3,
                                 std::size_t s);

struct PseudoWarning {
  std::size_t line = 0;  // 1-based line of the answer
  std::string text;
  std::string reason;
};

struct PseudoOutcome {
  PseudoCam pseudo;
  std::vector<PseudoWarning> warnings;
  ChatTranscript transcript;
  bool cache_hit = false;
};

std::string PseudoPrompt(const std::vector<std::string>& descriptions, const Label& label,
                         const std::vector<std::string>& class_names);

// Parses lines "decision <class>: descriptions 1, 3". Class names match
// case-insensitively, or by unique prefix. Indices are 1-based over the
// valid descriptions; out-of-range indices and unknown classes become
// warnings. Columns of negative classes stay zero.
PseudoOutcome ParsePseudoAnswer(const std::string& answer, const std::string& sample_id,
                                const Mask& description_mask, const Label& label,
                                const std::vector<std::string>& class_names);

// Throws kData when there are no valid descriptions.
PseudoOutcome derive_pseudo_cam(const std::string& sample_id,
                                const std::vector<std::string>& descriptions,
                                const Mask& description_mask, const Label& label,
                                const std::vector<std::string>& class_names,
                                ChatBackend& backend,
                                const std::optional<std::filesystem::path>& cache_dir);

}  // namespace fusedrive
