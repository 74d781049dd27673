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

#include "fusedrive/vlm.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <httplib.h>
#include <nlohmann/json.hpp>
#include <regex>
#include <sstream>
#include <thread>

#include "fusedrive/binary_io.hpp"
#include "fusedrive/error.hpp"

namespace fusedrive {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string Trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string Lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string Fnv1aHex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string ReadText(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

void VlmEndpointConfig::Validate() const {
  if (mock_dir && !base_url.empty()) {
    Fail(ErrorKind::kConfig, "--endpoint and --mock-dir are mutually exclusive");
  }
  if (!mock_dir && base_url.empty()) {
    Fail(ErrorKind::kConfig, "either --endpoint or --mock-dir is required");
  }
  if (mock_dir && !fs::is_directory(*mock_dir)) {
    Fail(ErrorKind::kConfig, "mock directory '" + mock_dir->string() + "' does not exist");
  }
  if (!(timeout_s > 0.0)) Fail(ErrorKind::kConfig, "timeout must be > 0");
  if (retry.max_attempts < 1) Fail(ErrorKind::kConfig, "retry attempts must be >= 1");
  if (retry.backoff_s < 0.0) Fail(ErrorKind::kConfig, "retry backoff must be >= 0");
  if (token_env.empty()) Fail(ErrorKind::kConfig, "token variable name is empty");
}

std::size_t ChatTranscript::count(const std::string& role) const {
  return static_cast<std::size_t>(std::count_if(
      turns.begin(), turns.end(), [&](const ChatTurn& t) { return t.message.role == role; }));
}

std::vector<ChatMessage> ChatTranscript::messages() const {
  std::vector<ChatMessage> out;
  for (const ChatTurn& t : turns) out.push_back(t.message);
  return out;
}

std::string EncodeTranscript(const ChatTranscript& t) {
  std::ostringstream out;
  out << "fusedrive-transcript 1\n"
      << "sample " << t.sample_id << "\n"
      << "phase " << t.phase << "\n"
      << "prompt-hash " << t.prompt_hash << "\n"
      << "complete " << (t.complete ? 1 : 0) << "\n"
      << "turns " << t.turns.size() << "\n";
  for (const ChatTurn& turn : t.turns) {
    const std::string image = turn.message.image_ref.value_or("");
    out << "turn " << turn.message.role << " " << turn.timestamp << " " << image.size()
        << " " << turn.message.text.size() << "\n"
        << image << turn.message.text << "\n";
  }
  return out.str();
}

ChatTranscript DecodeTranscript(const std::string& bytes) {
  std::size_t pos = 0;
  auto fail = [&](const std::string& what) -> void {
    Fail(ErrorKind::kFormat, "transcript at offset " + std::to_string(pos) + ": " + what);
  };
  auto line = [&]() {
    const std::size_t nl = bytes.find('\n', pos);
    if (nl == std::string::npos) fail("truncated header");
    std::string l = bytes.substr(pos, nl - pos);
    pos = nl + 1;
    return l;
  };
  auto keyed = [&](const std::string& key) {
    std::string l = line();
    if (l.rfind(key + " ", 0) != 0 && l != key) fail("expected '" + key + "'");
    return l.size() > key.size() ? l.substr(key.size() + 1) : std::string();
  };
  if (line() != "fusedrive-transcript 1") fail("bad magic line");
  ChatTranscript t;
  t.sample_id = keyed("sample");
  t.phase = keyed("phase");
  t.prompt_hash = keyed("prompt-hash");
  const std::string complete = keyed("complete");
  if (complete != "0" && complete != "1") fail("bad 'complete' flag");
  t.complete = complete == "1";
  std::size_t n = 0;
  try {
    n = std::stoul(keyed("turns"));
  } catch (const std::logic_error&) {
    fail("bad turn count");
  }
  for (std::size_t i = 0; i < n; ++i) {
    std::istringstream head(keyed("turn"));
    ChatTurn turn;
    std::size_t image_len = 0, text_len = 0;
    if (!(head >> turn.message.role >> turn.timestamp >> image_len >> text_len)) {
      fail("bad turn header");
    }
    if (image_len + text_len + 1 > bytes.size() - pos) fail("truncated turn");
    if (image_len > 0) turn.message.image_ref = bytes.substr(pos, image_len);
    pos += image_len;
    turn.message.text = bytes.substr(pos, text_len);
    pos += text_len;
    if (bytes[pos] != '\n') fail("missing turn terminator");
    ++pos;
    t.turns.push_back(std::move(turn));
  }
  if (pos != bytes.size()) fail("trailing bytes");
  return t;
}

fs::path TranscriptPath(const fs::path& cache_dir, const std::string& sample_id,
                        const std::string& phase) {
  return cache_dir / sample_id / (phase + ".txt");
}

MockBackend::MockBackend(fs::path dir) : dir_(std::move(dir)) {
  if (!fs::is_directory(dir_)) {
    Fail(ErrorKind::kConfig, "mock directory '" + dir_.string() + "' does not exist");
  }
}

std::string MockBackend::complete(const ChatRequest& request) {
  ++calls_;
  for (const fs::path& p : {dir_ / request.sample_id / (request.step + ".txt"),
                            dir_ / "_default" / (request.step + ".txt")}) {
    if (fs::is_regular_file(p)) return ReadText(p);
  }
  Fail(ErrorKind::kTransport, "mock backend: no canned answer for sample '" +
                                  request.sample_id + "' step '" + request.step + "'");
}

std::string MockBackend::timestamp(std::size_t turn_index) const {
  char buf[32];
  std::snprintf(buf, sizeof buf, "step-%04zu", turn_index);
  return buf;
}

HttpBackend::HttpBackend(VlmEndpointConfig config) : config_(std::move(config)) {
  const char* token = std::getenv(config_.token_env.c_str());
  if (token == nullptr || *token == '\0') {
    Fail(ErrorKind::kConfig,
         "environment variable " + config_.token_env + " holding the API token is not set");
  }
  token_ = token;
  static const std::regex url_re(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(config_.base_url, m, url_re)) {
    Fail(ErrorKind::kConfig, "endpoint '" + config_.base_url + "' is not an http(s) URL");
  }
  host_ = m[1].str();
  std::string base = m[2].matched ? m[2].str() : std::string();
  while (!base.empty() && base.back() == '/') base.pop_back();
  path_ = base + "/chat/completions";
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (host_.rfind("https://", 0) == 0) {
    Fail(ErrorKind::kConfig, "this build has no TLS support; use an http:// endpoint");
  }
#endif
}

namespace {

std::string ImageUrl(const std::string& ref) {
  if (ref.rfind("http://", 0) == 0 || ref.rfind("https://", 0) == 0 ||
      ref.rfind("data:", 0) == 0) {
    return ref;
  }
  if (!fs::is_regular_file(ref)) {
    Fail(ErrorKind::kData, "image '" + ref + "' not found");
  }
  std::string ext = Lower(fs::path(ref).extension().string());
  std::string mime = ext == ".png" ? "image/png" : ext == ".webp" ? "image/webp" : "image/jpeg";
  return "data:" + mime + ";base64," + httplib::detail::base64_encode(ReadFileBytes(ref));
}

}  // namespace

std::string HttpBackend::RequestBody(const std::vector<ChatMessage>& messages) const {
  json msgs = json::array();
  for (const ChatMessage& m : messages) {
    if (m.image_ref) {
      msgs.push_back({{"role", m.role},
                      {"content",
                       json::array({{{"type", "text"}, {"text", m.text}},
                                    {{"type", "image_url"},
                                     {"image_url", {{"url", ImageUrl(*m.image_ref)}}}}})}});
    } else {
      msgs.push_back({{"role", m.role}, {"content", m.text}});
    }
  }
  return json{{"model", config_.model}, {"messages", msgs}, {"temperature", 0}}.dump();
}

std::string HttpBackend::complete(const ChatRequest& request) {
  const std::string body = RequestBody(request.messages);
  httplib::Client client(host_);
  const auto secs = static_cast<time_t>(config_.timeout_s);
  const auto usecs = static_cast<time_t>((config_.timeout_s - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  client.set_bearer_token_auth(token_);

  std::string last = "no attempt made";
  double backoff = config_.retry.backoff_s;
  for (std::size_t attempt = 1; attempt <= config_.retry.max_attempts; ++attempt) {
    ++calls_;
    auto res = client.Post(path_, body, "application/json");
    if (res && res->status == 200) {
      try {
        const json j = json::parse(res->body);
        const json& content = j.at("choices").at(0).at("message").at("content");
        if (content.is_string()) return content.get<std::string>();
        std::string text;
        for (const json& part : content) {
          if (part.value("type", "") == "text") text += part.value("text", "");
        }
        return text;
      } catch (const json::exception& e) {
        Fail(ErrorKind::kParse, std::string("chat response is not a completion (") + e.what() +
                                    "); raw body: " + res->body);
      }
    }
    if (res) {
      last = "HTTP status " + std::to_string(res->status);
      const bool retryable = res->status == 429 || res->status >= 500;
      if (!retryable) break;
    } else {
      last = "transport error: " + httplib::to_string(res.error());
    }
    if (attempt < config_.retry.max_attempts) {
      std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
      backoff *= 2.0;
    }
  }
  Fail(ErrorKind::kTransport, "chat request for sample '" + request.sample_id + "' step '" +
                                  request.step + "' failed: " + last);
}

std::string HttpBackend::timestamp(std::size_t) const {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::unique_ptr<ChatBackend> MakeBackend(const VlmEndpointConfig& config) {
  config.Validate();
  if (config.mock()) return std::make_unique<MockBackend>(*config.mock_dir);
  return std::make_unique<HttpBackend>(config);
}

std::vector<std::string> ParseList(const std::string& answer) {
  static const std::regex bullet(R"(^\s*(?:[-*•]|\(?\d+[.):])\s*)");
  std::vector<std::string> lines;
  std::istringstream in(answer);
  std::string raw;
  while (std::getline(in, raw)) {
    std::string l = std::regex_replace(raw, bullet, "", std::regex_constants::format_first_only);
    l.erase(std::remove(l.begin(), l.end(), '*'), l.end());
    l = Trim(l);
    if (l.empty() || l.back() == ':') continue;
    lines.push_back(l);
  }
  if (lines.size() == 1) {
    std::string one = std::regex_replace(lines[0], std::regex(R"(,?\s+and\s+)"), ",");
    lines.clear();
    std::istringstream parts(one);
    std::string item;
    while (std::getline(parts, item, ',')) {
      item = Trim(item);
      if (!item.empty()) lines.push_back(item);
    }
  }
  for (std::string& l : lines) {
    while (!l.empty() && l.back() == '.') l.pop_back();
    l = Trim(l);
  }
  lines.erase(std::remove_if(lines.begin(), lines.end(),
                             [](const std::string& s) { return s.empty(); }),
              lines.end());
  if (lines.size() == 1) {
    const std::string l = Lower(lines[0]);
    if (l == "none" || l == "no objects" || l == "nothing") lines.clear();
  }
  return lines;
}

namespace {

EnrichmentResult ParseObjects(const std::string& sample_id, const std::string& a1,
                              const std::string& a2) {
  EnrichmentResult r;
  r.sample_id = sample_id;
  r.objects = ParseList(a1);
  if (r.objects.empty()) {
    Fail(ErrorKind::kParse, "sample '" + sample_id +
                                "': no objects in the answer to the first question; raw: " + a1);
  }
  for (const std::string& item : ParseList(a2)) {
    const std::string key = Lower(item);
    auto it = std::find_if(r.objects.begin(), r.objects.end(),
                           [&](const std::string& o) { return Lower(o) == key; });
    if (it != r.objects.end() &&
        std::find(r.relevant_objects.begin(), r.relevant_objects.end(), *it) ==
            r.relevant_objects.end()) {
      r.relevant_objects.push_back(*it);
    }
  }
  return r;
}

}  // namespace

EnrichmentResult ParseEnrichment(const std::string& sample_id, const std::string& a1,
                                 const std::string& a2, const std::string& a3,
                                 std::size_t s) {
  EnrichmentResult r = ParseObjects(sample_id, a1, a2);
  if (r.relevant_objects.empty()) return r;
  r.descriptions = ParseList(a3);
  if (r.descriptions.empty()) {
    Fail(ErrorKind::kParse, "sample '" + sample_id +
                                "': no details in the answer to the third question; raw: " + a3);
  }
  if (r.descriptions.size() > s) r.descriptions.resize(s);
  return r;
}

std::string EnrichmentToJson(const EnrichmentResult& r) {
  return json{{"sample_id", r.sample_id},
              {"objects", r.objects},
              {"relevant_objects", r.relevant_objects},
              {"descriptions", r.descriptions}}
             .dump(2) +
         "\n";
}

EnrichmentResult EnrichmentFromJson(const std::string& text) {
  try {
    const json j = json::parse(text);
    EnrichmentResult r;
    r.sample_id = j.at("sample_id").get<std::string>();
    r.objects = j.at("objects").get<std::vector<std::string>>();
    r.relevant_objects = j.at("relevant_objects").get<std::vector<std::string>>();
    r.descriptions = j.at("descriptions").get<std::vector<std::string>>();
    return r;
  } catch (const json::exception& e) {
    Fail(ErrorKind::kFormat, std::string("enrichment file: ") + e.what());
  }
}

namespace {

std::optional<ChatTranscript> CachedTranscript(const std::optional<fs::path>& cache_dir,
                                               const std::string& sample_id,
                                               const std::string& phase,
                                               const std::string& hash) {
  if (!cache_dir) return std::nullopt;
  const fs::path p = TranscriptPath(*cache_dir, sample_id, phase);
  if (!fs::is_regular_file(p)) return std::nullopt;
  ChatTranscript t;
  try {
    t = DecodeTranscript(ReadFileBytes(p));
  } catch (const Error&) {
    return std::nullopt;
  }
  if (!t.complete || t.prompt_hash != hash || t.sample_id != sample_id) return std::nullopt;
  return t;
}

void Persist(const std::optional<fs::path>& cache_dir, const ChatTranscript& t) {
  if (cache_dir) WriteFileBytes(TranscriptPath(*cache_dir, t.sample_id, t.phase),
                                EncodeTranscript(t));
}

// Appends a question, asks it with the whole conversation and persists the
// answer before anything parses it.
std::string Ask(ChatTranscript& t, ChatBackend& backend, const std::string& step,
                ChatMessage question, const std::optional<fs::path>& cache_dir) {
  t.turns.push_back({std::move(question), backend.timestamp(t.turns.size())});
  const std::string answer = backend.complete({t.sample_id, step, t.messages()});
  t.turns.push_back({{"assistant", answer, std::nullopt}, backend.timestamp(t.turns.size())});
  Persist(cache_dir, t);
  return answer;
}

std::string AnswerAfter(const ChatTranscript& t, const std::string& question) {
  for (std::size_t i = 0; i + 1 < t.turns.size(); ++i) {
    if (t.turns[i].message.role == "user" && t.turns[i].message.text == question) {
      return t.turns[i + 1].message.text;
    }
  }
  return {};
}

}  // namespace

EnrichmentOutcome enrich_sample(const std::string& sample_id, const std::string& image_ref,
                                std::size_t s, ChatBackend& backend,
                                const std::optional<fs::path>& cache_dir) {
  const std::string hash = Fnv1aHex(std::string("enrich\n") + kQuestionObjects + "\n" +
                                    kQuestionRelevant + "\n" + kQuestionDetails + "\n" +
                                    image_ref);
  EnrichmentOutcome out;
  if (auto cached = CachedTranscript(cache_dir, sample_id, "enrich", hash)) {
    out.transcript = std::move(*cached);
    out.cache_hit = true;
    out.result = ParseEnrichment(sample_id, AnswerAfter(out.transcript, kQuestionObjects),
                                 AnswerAfter(out.transcript, kQuestionRelevant),
                                 AnswerAfter(out.transcript, kQuestionDetails), s);
    return out;
  }

  ChatTranscript& t = out.transcript;
  t.sample_id = sample_id;
  t.phase = "enrich";
  t.prompt_hash = hash;
  const std::string a1 =
      Ask(t, backend, "enrich_q1", {"user", kQuestionObjects, image_ref}, cache_dir);
  const std::string a2 =
      Ask(t, backend, "enrich_q2", {"user", kQuestionRelevant, std::nullopt}, cache_dir);
  std::string a3;
  if (!ParseObjects(sample_id, a1, a2).relevant_objects.empty()) {
    a3 = Ask(t, backend, "enrich_q3", {"user", kQuestionDetails, std::nullopt}, cache_dir);
  }
  out.result = ParseEnrichment(sample_id, a1, a2, a3, s);
  t.complete = true;
  Persist(cache_dir, t);
  return out;
}

std::string PseudoPrompt(const std::vector<std::string>& descriptions, const Label& label,
                         const std::vector<std::string>& class_names) {
  std::ostringstream p;
  p << "A driving scene is described by these numbered text descriptions:\n";
  for (std::size_t i = 0; i < descriptions.size(); ++i) {
    p << (i + 1) << ". " << descriptions[i] << "\n";
  }
  p << "The ground-truth driving decisions for this scene are:";
  bool first = true;
  for (std::size_t c = 0; c < label.size() && c < class_names.size(); ++c) {
    if (!label[c]) continue;
    p << (first ? " " : ", ") << class_names[c];
    first = false;
  }
  p << ".\nMatch each decision with the related text descriptions that explain it. "
       "Answer with one line per decision in the form "
       "\"decision <name>: descriptions <i>, <j>\".\n";
  return p.str();
}

PseudoOutcome ParsePseudoAnswer(const std::string& answer, const std::string& sample_id,
                                const Mask& description_mask, const Label& label,
                                const std::vector<std::string>& class_names) {
  const std::size_t rows = description_mask.size();
  const std::size_t classes = class_names.size();
  if (label.size() != classes) {
    Fail(ErrorKind::kData, "label length " + std::to_string(label.size()) + " != " +
                               std::to_string(classes) + " classes");
  }
  std::vector<std::size_t> valid_rows;
  for (std::size_t r = 0; r < rows; ++r)
    if (description_mask[r]) valid_rows.push_back(r);

  PseudoOutcome out;
  out.pseudo = PseudoCam::Zeros(sample_id, rows, classes, description_mask);
  static const std::regex line_re(
      R"(^\s*[-*]?\s*(?:decision\s+)?([^:]+?)\s*:\s*(?:descriptions?|rows?)?\s*(.*)$)",
      std::regex::icase);
  static const std::regex num_re(R"(-?\d+)");
  std::istringstream in(answer);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string l;
    for (char ch : raw)
      if (ch != '*') l += ch;
    if (Trim(l).empty()) continue;
    std::smatch m;
    if (!std::regex_match(l, m, line_re)) {
      out.warnings.push_back({line_no, raw, "not a 'decision <name>: descriptions ...' line"});
      continue;
    }
    const std::string name = Lower(Trim(m[1].str()));
    std::optional<std::size_t> cls;
    for (std::size_t c = 0; c < classes; ++c)
      if (Lower(class_names[c]) == name) cls = c;
    if (!cls) {
      std::vector<std::size_t> hits;
      for (std::size_t c = 0; c < classes; ++c)
        if (Lower(class_names[c]).rfind(name, 0) == 0) hits.push_back(c);
      if (hits.size() == 1) cls = hits[0];
    }
    if (!cls) {
      out.warnings.push_back({line_no, raw, "unknown decision '" + Trim(m[1].str()) + "'"});
      continue;
    }
    if (!label[*cls]) continue;
    const std::string rest = m[2].str();
    for (auto it = std::sregex_iterator(rest.begin(), rest.end(), num_re);
         it != std::sregex_iterator(); ++it) {
      long long idx = 0;
      try {
        idx = std::stoll(it->str());
      } catch (const std::out_of_range&) {
        idx = -1;
      }
      if (idx < 1 || static_cast<std::size_t>(idx) > valid_rows.size()) {
        out.warnings.push_back({line_no, raw, "description index " + it->str() +
                                                  " out of range 1.." +
                                                  std::to_string(valid_rows.size())});
        continue;
      }
      out.pseudo.set(valid_rows[static_cast<std::size_t>(idx - 1)], *cls, 1);
    }
  }
  return out;
}

PseudoOutcome derive_pseudo_cam(const std::string& sample_id,
                                const std::vector<std::string>& descriptions,
                                const Mask& description_mask, const Label& label,
                                const std::vector<std::string>& class_names,
                                ChatBackend& backend, const std::optional<fs::path>& cache_dir) {
  if (descriptions.size() != description_mask.size()) {
    Fail(ErrorKind::kData, "sample '" + sample_id + "': description list and mask differ in length");
  }
  std::vector<std::string> valid;
  for (std::size_t r = 0; r < descriptions.size(); ++r)
    if (description_mask[r]) valid.push_back(descriptions[r]);
  if (valid.empty()) {
    Fail(ErrorKind::kData, "sample '" + sample_id + "' has no text descriptions");
  }
  const std::string prompt = PseudoPrompt(valid, label, class_names);
  const std::string hash = Fnv1aHex("pseudo\n" + prompt);

  ChatTranscript t;
  bool hit = false;
  if (auto cached = CachedTranscript(cache_dir, sample_id, "pseudo", hash)) {
    t = std::move(*cached);
    hit = true;
  } else {
    t.sample_id = sample_id;
    t.phase = "pseudo";
    t.prompt_hash = hash;
    Ask(t, backend, "pseudo", {"user", prompt, std::nullopt}, cache_dir);
    t.complete = true;
    Persist(cache_dir, t);
  }
  PseudoOutcome out =
      ParsePseudoAnswer(AnswerAfter(t, prompt), sample_id, description_mask, label, class_names);
  out.transcript = std::move(t);
  out.cache_hit = hit;
  return out;
}

}  // namespace fusedrive
