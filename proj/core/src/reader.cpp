#include "dcesynth/reader.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>

#include "dcesynth/error.hpp"
#include "dcesynth/rng.hpp"

namespace dcesynth::reader {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(Task task) {
  switch (task) {
    case Task::discrimination: return "discrimination";
    case Task::comparative: return "comparative";
    case Task::annotation: return "annotation";
  }
  return "";
}

Task parse_task(std::string_view text) {
  if (text == "discrimination" || text == "1") return Task::discrimination;
  if (text == "comparative" || text == "2") return Task::comparative;
  if (text == "annotation" || text == "3") return Task::annotation;
  throw ContractError("unknown task '" + std::string(text) + "'");
}

namespace {

std::vector<fs::path> list_png(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng() % i]);
}

std::string item_id(std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "item-%02zu", index + 1);
  return buf;
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

ImagePool ImagePool::scan(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw NotFoundError("image pool not found: " + dir.string());
  ImagePool pool;
  pool.real = list_png(dir / "real");
  pool.synthetic = list_png(dir / "synthetic");
  pool.pre = list_png(dir / "pre");
  std::string digest;
  for (const auto* group : {&pool.real, &pool.synthetic, &pool.pre}) {
    for (const auto& p : *group) {
      digest += fs::relative(p, dir).generic_string() + ":" + hex64(fnv1a64(read_bytes(p))) + "\n";
    }
  }
  pool.hash = hex64(fnv1a64(digest));
  return pool;
}

std::vector<std::string> ImagePool::triplet_names() const {
  auto names = [](const std::vector<fs::path>& v) {
    std::vector<std::string> n;
    for (const auto& p : v) n.push_back(p.filename().string());
    std::sort(n.begin(), n.end());
    return n;
  };
  const auto r = names(real), s = names(synthetic), p = names(pre);
  std::vector<std::string> rs, out;
  std::set_intersection(r.begin(), r.end(), s.begin(), s.end(), std::back_inserter(rs));
  std::set_intersection(rs.begin(), rs.end(), p.begin(), p.end(), std::back_inserter(out));
  return out;
}

namespace {

struct DrawnItem {
  Item item;
  std::vector<fs::path> paths;
};

std::vector<DrawnItem> draw(const ImagePool& pool, const SessionRequest& req) {
  Rng rng(mix_seed(fnv1a64(pool.hash), req.seed, static_cast<std::uint64_t>(req.task)));
  std::vector<DrawnItem> out;
  if (req.task == Task::discrimination) {
    if (pool.synthetic.size() < kDiscriminationSynthetic || pool.real.size() < kDiscriminationReal) {
      throw ContractError("discrimination task needs at least 10 synthetic and 5 real images in the pool");
    }
    auto syn = pool.synthetic;
    auto real = pool.real;
    shuffle(syn, rng);
    shuffle(real, rng);
    for (int i = 0; i < kDiscriminationSynthetic; ++i) out.push_back({{"", {{"image", ""}}, "synthetic"}, {syn[i]}});
    for (int i = 0; i < kDiscriminationReal; ++i) out.push_back({{"", {{"image", ""}}, "real"}, {real[i]}});
    shuffle(out, rng);
  } else {
    if (req.n_triplets < 1) throw ContractError("n_triplets must be >= 1");
    auto names = pool.triplet_names();
    if (names.empty()) throw ContractError("pool has no complete pre/real/synthetic triplets");
    shuffle(names, rng);
    const std::size_t n = std::min<std::size_t>(names.size(), static_cast<std::size_t>(req.n_triplets));
    const fs::path root_real = pool.real.front().parent_path();
    const fs::path root_syn = pool.synthetic.front().parent_path();
    const fs::path root_pre = pool.pre.front().parent_path();
    for (std::size_t i = 0; i < n; ++i) {
      const auto& name = names[i];
      DrawnItem d;
      if (req.task == Task::comparative) {
        const bool real_left = (rng() & 1ULL) != 0;
        d.item.images = {{"pre", ""}, {"left", ""}, {"right", ""}};
        d.paths = {root_pre / name, real_left ? root_real / name : root_syn / name,
                   real_left ? root_syn / name : root_real / name};
        d.item.ground_truth = real_left ? "left" : "right";
      } else {
        d.item.images = {{"pre", ""}, {"real_post", ""}, {"synthetic_post", ""}};
        d.paths = {root_pre / name, root_real / name, root_syn / name};
      }
      out.push_back(std::move(d));
    }
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i].item.item_id = item_id(i);
  return out;
}

}  // namespace

std::vector<Item> draw_items(const ImagePool& pool, const SessionRequest& request) {
  std::vector<Item> items;
  for (auto& d : draw(pool, request)) items.push_back(std::move(d.item));
  return items;
}

ReaderService::ReaderService(ImagePool pool, Clock clock) : pool_(std::move(pool)), clock_(std::move(clock)) {
  if (!clock_) clock_ = utc_now;
}

ordered_json ReaderService::create_session(const SessionRequest& request) {
  if (request.reader_id.empty()) throw ContractError("reader_id is required");
  auto drawn = draw(pool_, request);
  std::lock_guard lock(mutex_);
  Session s;
  s.session_id = hex64(mix_seed(fnv1a64(pool_.hash), request.seed, ++counter_));
  s.request = request;
  Rng token_rng(mix_seed(fnv1a64(s.session_id), counter_));
  for (auto& d : drawn) {
    for (std::size_t k = 0; k < d.item.images.size(); ++k) {
      std::string token;
      do {
        token = hex64(token_rng()) + hex64(token_rng());
      } while (tokens_.count(token) != 0);
      d.item.images[k].token = token;
      tokens_[token] = d.paths[k];
    }
    s.items.push_back(std::move(d.item));
  }
  ordered_json out = {{"session_id", s.session_id},
                      {"reader_id", request.reader_id},
                      {"task", to_string(request.task)},
                      {"total_items", s.items.size()},
                      {"feedback", request.feedback}};
  sessions_.emplace(s.session_id, std::move(s));
  return out;
}

ordered_json ReaderService::next_item(const std::string& session_id) const {
  std::lock_guard lock(mutex_);
  const auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw NotFoundError("unknown session " + session_id);
  const Session& s = it->second;
  for (std::size_t i = 0; i < s.items.size(); ++i) {
    const Item& item = s.items[i];
    if (s.acks.count(item.item_id) != 0) continue;
    ordered_json images = ordered_json::array();
    for (const auto& ref : item.images) images.push_back({{"role", ref.role}, {"url", "/images/" + ref.token}});
    return {{"session_id", s.session_id},
            {"task", to_string(s.request.task)},
            {"index", i},
            {"total_items", s.items.size()},
            {"item_id", item.item_id},
            {"images", images},
            {"done", false}};
  }
  return {{"session_id", s.session_id}, {"total_items", s.items.size()}, {"done", true}};
}

namespace {

Response parse_response_body(const json& body, const Session& s) {
  if (!body.is_object()) throw ContractError("response body must be a JSON object");
  for (const auto& [key, value] : body.items()) {
    static const std::vector<std::string> allowed{"item_id", "answer", "realism_score", "annotations", "remark"};
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ContractError("unknown response field '" + key + "'");
    }
  }
  Response r;
  r.session_id = s.session_id;
  r.reader_id = s.request.reader_id;
  r.task = s.request.task;
  try {
    r.item_id = body.at("item_id").get<std::string>();
    r.answer = body.value("answer", "");
    r.remark = body.value("remark", "");
    if (body.contains("realism_score") && !body.at("realism_score").is_null()) {
      const auto& v = body.at("realism_score");
      if (!v.is_number_integer()) throw ContractError("realism_score must be an integer");
      r.realism_score = v.get<int>();
    }
    if (body.contains("annotations")) {
      for (const auto& a : body.at("annotations")) {
        r.annotations.push_back({a.at("x").get<double>(), a.at("y").get<double>(), a.at("width").get<double>(),
                                 a.at("height").get<double>(), a.value("remark", "")});
      }
    }
  } catch (const json::exception& e) {
    throw ContractError(std::string("malformed response: ") + e.what());
  }
  switch (s.request.task) {
    case Task::discrimination:
      if (r.answer != "real" && r.answer != "synthetic") throw ContractError("answer must be 'real' or 'synthetic'");
      break;
    case Task::comparative:
      if (r.answer != "left" && r.answer != "right") throw ContractError("answer must be 'left' or 'right'");
      break;
    case Task::annotation:
      if (!r.realism_score) throw ContractError("realism_score is required for the annotation task");
      break;
  }
  if (r.realism_score && (*r.realism_score < 0 || *r.realism_score > kMaxRealism)) {
    throw ContractError("realism_score must lie in [0, 10]");
  }
  for (const auto& a : r.annotations) {
    if (!(a.width >= 0 && a.height >= 0)) throw ContractError("annotation rectangles need non-negative size");
  }
  return r;
}

}  // namespace

ordered_json ReaderService::submit_response(const std::string& session_id, const json& body) {
  std::lock_guard lock(mutex_);
  const auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw NotFoundError("unknown session " + session_id);
  Session& s = it->second;
  std::string id;
  if (body.is_object() && body.contains("item_id") && body.at("item_id").is_string()) id = body.at("item_id");
  const auto item = std::find_if(s.items.begin(), s.items.end(), [&](const Item& i) { return i.item_id == id; });
  if (item == s.items.end()) throw NotFoundError("unknown item '" + id + "' in session " + session_id);
  if (const auto ack = s.acks.find(id); ack != s.acks.end()) return ack->second;

  Response r = parse_response_body(body, s);
  r.timestamp = clock_();
  r.ground_truth = item->ground_truth;
  if (s.request.task != Task::annotation) r.correct = r.answer == r.ground_truth;

  ordered_json ack = {{"session_id", s.session_id},
                      {"item_id", r.item_id},
                      {"response_index", s.responses.size()},
                      {"timestamp", r.timestamp}};
  if (s.request.feedback && r.correct) ack["correct"] = *r.correct;
  s.responses.push_back(std::move(r));
  s.acks[id] = ack;
  return ack;
}

std::string ReaderService::export_csv(const std::string& session_id) const {
  std::lock_guard lock(mutex_);
  const auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw NotFoundError("unknown session " + session_id);
  if (!it->second.complete()) throw IncompleteSessionError("session " + session_id + " is not complete");
  return responses_to_csv(it->second.responses);
}

std::optional<fs::path> ReaderService::image_path(const std::string& token) const {
  std::lock_guard lock(mutex_);
  const auto it = tokens_.find(token);
  if (it == tokens_.end()) return std::nullopt;
  return it->second;
}

namespace {

const std::vector<std::string> kCsvColumns{"record_type", "session_id", "reader_id",    "task",      "item_id",
                                           "answer",      "realism_score", "annotations", "remark",   "timestamp",
                                           "ground_truth", "correct",   "n_correct",    "n_responses", "accuracy",
                                           "mean_realism"};

std::string csv_field(const std::string& v) {
  if (v.find_first_of(",\"\n\r") == std::string::npos) return v;
  std::string out = "\"";
  for (char c : v) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string csv_row(const std::vector<std::string>& fields) {
  std::string line;
  for (std::size_t i = 0; i < fields.size(); ++i) line += (i ? "," : "") + csv_field(fields[i]);
  return line + "\n";
}

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
      }
      row.clear();
      field.clear();
      any = false;
    } else {
      field += c;
      any = true;
    }
  }
  if (quoted) throw IoError("csv: unterminated quoted field");
  if (any || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string annotations_json(const std::vector<Rect>& rects) {
  json arr = json::array();
  for (const auto& a : rects) {
    arr.push_back({{"x", a.x}, {"y", a.y}, {"width", a.width}, {"height", a.height}, {"remark", a.remark}});
  }
  return arr.dump();
}

std::string fmt_double(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

}  // namespace

std::string responses_to_csv(const std::vector<Response>& responses) {
  std::string out = csv_row(kCsvColumns);
  std::vector<std::string> order;
  std::map<std::string, std::vector<const Response*>> by_session;
  for (const auto& r : responses) {
    if (by_session.count(r.session_id) == 0) order.push_back(r.session_id);
    by_session[r.session_id].push_back(&r);
    out += csv_row({"response", r.session_id, r.reader_id, std::string(to_string(r.task)), r.item_id, r.answer,
                    r.realism_score ? std::to_string(*r.realism_score) : "", annotations_json(r.annotations),
                    r.remark, r.timestamp, r.ground_truth, r.correct ? (*r.correct ? "1" : "0") : "", "", "", "",
                    ""});
  }
  for (const auto& sid : order) {
    const auto& rs = by_session[sid];
    const Response& first = *rs.front();
    std::string n_correct, accuracy, mean_realism;
    if (first.task == Task::annotation) {
      double sum = 0.0;
      int n = 0;
      for (const auto* r : rs) {
        if (r->realism_score) {
          sum += *r->realism_score;
          ++n;
        }
      }
      if (n > 0) mean_realism = fmt_double(sum / n);
    } else {
      const auto c = std::count_if(rs.begin(), rs.end(), [](const Response* r) { return r->correct.value_or(false); });
      n_correct = std::to_string(c);
      accuracy = fmt_double(static_cast<double>(c) / static_cast<double>(rs.size()));
    }
    out += csv_row({"summary", sid, first.reader_id, std::string(to_string(first.task)), "", "", "", "", "", "", "",
                    "", n_correct, std::to_string(rs.size()), accuracy, mean_realism});
  }
  return out;
}

std::vector<Response> responses_from_csv(std::string_view csv) {
  const auto rows = parse_csv(csv);
  if (rows.empty() || rows.front() != kCsvColumns) throw IoError("csv: unexpected header");
  std::vector<Response> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& f = rows[i];
    if (f.size() != kCsvColumns.size()) throw IoError("csv: row " + std::to_string(i) + " has wrong field count");
    if (f[0] != "response") continue;
    Response r;
    r.session_id = f[1];
    r.reader_id = f[2];
    r.task = parse_task(f[3]);
    r.item_id = f[4];
    r.answer = f[5];
    if (!f[6].empty()) r.realism_score = std::stoi(f[6]);
    try {
      for (const auto& a : json::parse(f[7])) {
        r.annotations.push_back({a.at("x").get<double>(), a.at("y").get<double>(), a.at("width").get<double>(),
                                 a.at("height").get<double>(), a.at("remark").get<std::string>()});
      }
    } catch (const json::exception& e) {
      throw IoError(std::string("csv: bad annotations: ") + e.what());
    }
    r.remark = f[8];
    r.timestamp = f[9];
    r.ground_truth = f[10];
    if (!f[11].empty()) r.correct = f[11] == "1";
    out.push_back(std::move(r));
  }
  return out;
}

namespace {

std::vector<std::string_view> split_path(std::string_view path) {
  std::vector<std::string_view> parts;
  const auto q = path.find('?');
  if (q != std::string_view::npos) path = path.substr(0, q);
  std::size_t start = 0;
  while (start < path.size()) {
    const auto end = std::min(path.find('/', start), path.size());
    if (end > start) parts.push_back(path.substr(start, end - start));
    start = end + 1;
  }
  return parts;
}

HttpResponse json_response(int status, const ordered_json& j) { return {status, "application/json", j.dump()}; }

HttpResponse error(int status, const std::string& message) {
  return json_response(status, ordered_json{{"error", message}});
}

}  // namespace

HttpResponse route(ReaderService& service, std::string_view method, std::string_view path, std::string_view body) {
  const auto parts = split_path(path);
  try {
    if (method == "POST" && parts.size() == 1 && parts[0] == "sessions") {
      const auto j = json::parse(body.empty() ? std::string_view("{}") : body);
      if (!j.is_object()) return error(400, "expected a JSON object");
      for (const auto& [key, value] : j.items()) {
        if (key != "reader_id" && key != "task" && key != "seed" && key != "n_triplets" && key != "feedback") {
          return error(400, "unknown field '" + key + "'");
        }
      }
      if (!j.contains("seed")) return error(400, "seed is required");
      SessionRequest req;
      req.reader_id = j.value("reader_id", "");
      req.task = parse_task(j.value("task", "discrimination"));
      req.seed = j.at("seed").get<std::uint64_t>();
      req.n_triplets = j.value("n_triplets", kDefaultTriplets);
      req.feedback = j.value("feedback", false);
      return json_response(201, service.create_session(req));
    }
    if (parts.size() == 3 && parts[0] == "sessions") {
      const std::string id(parts[1]);
      if (method == "GET" && parts[2] == "next") return json_response(200, service.next_item(id));
      if (method == "POST" && parts[2] == "responses") return json_response(200, service.submit_response(id, json::parse(body)));
      if (method == "GET" && parts[2] == "export.csv") return {200, "text/csv", service.export_csv(id)};
    }
    if (method == "GET" && parts.size() == 2 && parts[0] == "images") {
      const auto p = service.image_path(std::string(parts[1]));
      if (!p) return error(404, "unknown image");
      return {200, "image/png", read_bytes(*p)};
    }
    return error(404, "no route for " + std::string(method) + " " + std::string(path));
  } catch (const NotFoundError& e) {
    return error(404, e.what());
  } catch (const IncompleteSessionError& e) {
    return error(409, e.what());
  } catch (const ContractError& e) {
    return error(400, e.what());
  } catch (const json::exception& e) {
    return error(400, std::string("invalid JSON: ") + e.what());
  }
}

}  // namespace dcesynth::reader
