#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dcesynth/error.hpp"

namespace dcesynth::reader {

/// Export requested before every item was answered.
class IncompleteSessionError : public Error {
 public:
  using Error::Error;
};

enum class Task { discrimination, comparative, annotation };

std::string_view to_string(Task task);
Task parse_task(std::string_view text);

inline constexpr int kDiscriminationSynthetic = 10;
inline constexpr int kDiscriminationReal = 5;
inline constexpr int kDefaultTriplets = 10;
inline constexpr int kMaxRealism = 10;

/// Images available to sessions. `<pool>/real`, `<pool>/synthetic` and
/// `<pool>/pre` hold PNGs; triplets pair files with the same name across the
/// three folders.
struct ImagePool {
  std::vector<std::filesystem::path> real;
  std::vector<std::filesystem::path> synthetic;
  std::vector<std::filesystem::path> pre;
  std::string hash;

  static ImagePool scan(const std::filesystem::path& dir);
  /// Names present in all three folders, sorted.
  std::vector<std::string> triplet_names() const;
};

struct ImageRef {
  std::string role;
  std::string token;
};

struct Item {
  std::string item_id;
  std::vector<ImageRef> images;
  /// Hidden: "real"/"synthetic" (discrimination), "left"/"right" for the
  /// side of the real post image (comparative), empty for annotation.
  std::string ground_truth;
};

struct Rect {
  double x = 0;
  double y = 0;
  double width = 0;
  double height = 0;
  std::string remark;

  friend bool operator==(const Rect&, const Rect&) = default;
};

struct Response {
  std::string session_id;
  std::string reader_id;
  Task task = Task::discrimination;
  std::string item_id;
  std::string answer;
  std::optional<int> realism_score;
  std::vector<Rect> annotations;
  std::string remark;
  std::string timestamp;
  std::string ground_truth;
  std::optional<bool> correct;

  friend bool operator==(const Response&, const Response&) = default;
};

struct SessionRequest {
  std::string reader_id;
  Task task = Task::discrimination;
  std::uint64_t seed = 0;
  int n_triplets = kDefaultTriplets;
  bool feedback = false;
};

struct Session {
  std::string session_id;
  SessionRequest request;
  std::vector<Item> items;
  std::vector<Response> responses;
  std::map<std::string, nlohmann::ordered_json> acks;

  bool complete() const { return responses.size() == items.size(); }
};

/// Deterministic item list for a session: depends only on the pool content
/// and the request's task, seed and size.
std::vector<Item> draw_items(const ImagePool& pool, const SessionRequest& request);

/// Thread-safe session store. Payloads returned to clients never include
/// ground truth or file names; images are addressed by opaque tokens.
class ReaderService {
 public:
  using Clock = std::function<std::string()>;

  explicit ReaderService(ImagePool pool, Clock clock = {});

  nlohmann::ordered_json create_session(const SessionRequest& request);
  /// Next unanswered item, or {"done": true}.
  nlohmann::ordered_json next_item(const std::string& session_id) const;
  /// Append-only; resubmitting an item returns the original acknowledgement.
  nlohmann::ordered_json submit_response(const std::string& session_id, const nlohmann::json& body);
  std::string export_csv(const std::string& session_id) const;
  std::optional<std::filesystem::path> image_path(const std::string& token) const;

  const ImagePool& pool() const { return pool_; }

 private:
  ImagePool pool_;
  Clock clock_;
  mutable std::mutex mutex_;
  std::map<std::string, Session> sessions_;
  std::map<std::string, std::filesystem::path> tokens_;
  std::uint64_t counter_ = 0;
};

/// CSV with one "response" row per response and one "summary" row holding
/// accuracy (Tasks 1-2) or the mean realism score (Task 3).
std::string responses_to_csv(const std::vector<Response>& responses);
/// Parses the "response" rows of responses_to_csv() output.
std::vector<Response> responses_from_csv(std::string_view csv);

struct HttpResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

/// Maps the HTTP surface onto the service: POST /sessions,
/// GET /sessions/{id}/next, POST /sessions/{id}/responses,
/// GET /sessions/{id}/export.csv and GET /images/{token}.
HttpResponse route(ReaderService& service, std::string_view method, std::string_view path, std::string_view body);

}  // namespace dcesynth::reader
