#include "absnav/abstract_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <tuple>
#include <unordered_map>

#include <json.hpp>

#include "absnav/errors.hpp"

namespace absnav {
namespace {

constexpr double kViewDupTolerance = 1e-9;
constexpr double kThresholdSlack = 1e-12;
constexpr int kModelFormatVersion = 1;

struct UnionFind {
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t root(std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  }
  void join(std::size_t a, std::size_t b) {
    a = root(a);
    b = root(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

}  // namespace

std::size_t AbstractModel::object_view_count() const {
  std::size_t n = 0;
  for (const auto& s : states) n += s.object_views.size();
  return n;
}

int ModelStore::add(AbstractModel m) {
  int next = 0;
  for (const auto& existing : models) next = std::max(next, existing.id + 1);
  m.id = next;
  models.push_back(std::move(m));
  return next;
}

AbstractModel* ModelStore::find(int model_id) {
  for (auto& m : models)
    if (m.id == model_id) return &m;
  return nullptr;
}

const AbstractModel* ModelStore::find(int model_id) const {
  for (const auto& m : models)
    if (m.id == model_id) return &m;
  return nullptr;
}

std::size_t ModelStore::state_count() const {
  std::size_t n = 0;
  for (const auto& m : models) n += m.states.size();
  return n;
}

void merge_object_views(AbstractState& into, const AbstractState& from) {
  for (const ObjectView& v : from.object_views) {
    const bool dup = std::any_of(into.object_views.begin(), into.object_views.end(), [&](const ObjectView& w) {
      return w.class_id == v.class_id && distance(w.map_position, v.map_position) <= kViewDupTolerance;
    });
    if (dup) continue;
    into.object_views.push_back(v);
    into.classes.insert(v.class_id);
  }
}

int insert_state(AbstractModel& model, AbstractState s, double dedup_threshold) {
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (const AbstractState& existing : model.states) {
    const double d = cos_dist(existing.features, s.features);
    if (d < best_d) {
      best_d = d;
      best = existing.id;
    }
  }
  if (best >= 0 && best_d <= dedup_threshold) {
    merge_object_views(model.states[static_cast<std::size_t>(best)], s);
    return best;
  }
  s.id = static_cast<int>(model.states.size());
  s.classes.clear();
  for (const auto& v : s.object_views) s.classes.insert(v.class_id);
  model.states.push_back(std::move(s));
  return model.states.back().id;
}

void record_transition(AbstractModel& model, int prev, Action a, int next) {
  const auto n = static_cast<int>(model.states.size());
  if (prev < 0 || prev >= n || next < 0 || next >= n)
    throw std::out_of_range("record_transition: state id out of range");
  if (a == Action::Stop) throw std::invalid_argument("record_transition: Stop has no successor");
  auto [it, inserted] = model.transitions.try_emplace({prev, a}, next);
  if (!inserted && it->second != next) {
    it->second = next;
    ++model.transition_conflicts;
  }
}

std::optional<MatchResult> best_match(const ModelStore& store, const AbstractState& s, double threshold) {
  std::optional<MatchResult> best;
  for (const AbstractModel& m : store.models) {
    for (const AbstractState& cand : m.states) {
      const double d = cos_dist(cand.features, s.features);
      const bool better = !best || d < best->distance ||
                          (d == best->distance && std::tie(m.id, cand.id) < std::tie(best->model_id, best->state_id));
      if (!better) continue;
      if (!best) best.emplace();
      best->model_id = m.id;
      best->state_id = cand.id;
      best->distance = d;
      best->transform = FrameTransform::aligning(s.anchor_pose, cand.anchor_pose);
    }
  }
  if (best && best->distance > threshold + kThresholdSlack) return std::nullopt;
  return best;
}

MergeResult merge_into(AbstractModel& target, const AbstractModel& current, const MatchResult& m,
                       int query_state, double dedup_threshold) {
  if (!m.transform.is_finite()) throw InvalidTransform("merge: transform is not finite");
  const auto target_size = static_cast<int>(target.states.size());
  if (query_state >= 0 && (m.state_id < 0 || m.state_id >= target_size))
    throw std::out_of_range("merge: matched state id out of range");

  MergeResult result;
  result.id_map.assign(current.states.size(), -1);
  std::vector<bool> fresh(current.states.size(), false);
  for (std::size_t i = 0; i < current.states.size(); ++i) {
    AbstractState s = current.states[i];
    s.anchor_pose = m.transform.apply(s.anchor_pose);
    for (auto& v : s.object_views) v.map_position = m.transform.apply(v.map_position);
    const int before = static_cast<int>(target.states.size());
    int id = 0;
    if (static_cast<int>(i) == query_state) {
      merge_object_views(target.states[static_cast<std::size_t>(m.state_id)], s);
      id = m.state_id;
    } else {
      s.id = -1;
      id = insert_state(target, std::move(s), dedup_threshold);
    }
    result.id_map[i] = id;
    fresh[i] = id >= before;
    if (!fresh[i]) ++result.unified;
  }
  for (const auto& [key, next] : current.transitions)
    record_transition(target, result.id_map[static_cast<std::size_t>(key.first)], key.second,
                      result.id_map[static_cast<std::size_t>(next)]);
  merge_maps(target.map, current.map, m.transform);
  return result;
}

AbstractModel& merge_models(ModelStore& store, const AbstractModel& current, const MatchResult& m,
                            int query_state, double dedup_threshold, MergeResult* result) {
  AbstractModel* target = store.find(m.model_id);
  if (!target) throw std::out_of_range("merge: model id not in store");
  MergeResult r = merge_into(*target, current, m, query_state, dedup_threshold);
  if (result) *result = std::move(r);
  return *target;
}

std::vector<GoalCandidate> goal_candidates(const AbstractModel& model, int goal_class, double cluster_radius) {
  struct Member {
    Vec2 p;
    int state;
  };
  std::vector<Member> members;
  for (const AbstractState& s : model.states)
    for (const ObjectView& v : s.object_views)
      if (v.class_id == goal_class) members.push_back({v.map_position, s.id});
  if (members.empty()) return {};

  // Spatial hash with cell = radius: linked pairs are always in adjacent cells.
  auto key = [&](Vec2 p) {
    return std::pair<std::int64_t, std::int64_t>{static_cast<std::int64_t>(std::floor(p.x / cluster_radius)),
                                                  static_cast<std::int64_t>(std::floor(p.y / cluster_radius))};
  };
  std::map<std::pair<std::int64_t, std::int64_t>, std::vector<std::size_t>> buckets;
  for (std::size_t i = 0; i < members.size(); ++i) buckets[key(members[i].p)].push_back(i);

  UnionFind uf(members.size());
  for (std::size_t i = 0; i < members.size(); ++i) {
    const auto [kx, ky] = key(members[i].p);
    for (std::int64_t dx = -1; dx <= 1; ++dx)
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        auto it = buckets.find({kx + dx, ky + dy});
        if (it == buckets.end()) continue;
        for (std::size_t j : it->second)
          if (j > i && distance(members[i].p, members[j].p) <= cluster_radius) uf.join(i, j);
      }
  }

  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < members.size(); ++i) groups[uf.root(i)].push_back(i);

  std::vector<GoalCandidate> out;
  out.reserve(groups.size());
  for (auto& [root, idx] : groups) {
    // Sorted summation keeps the centroid independent of input order.
    std::vector<Vec2> pts;
    std::set<int> states;
    for (std::size_t i : idx) {
      pts.push_back(members[i].p);
      states.insert(members[i].state);
    }
    std::sort(pts.begin(), pts.end(), [](Vec2 a, Vec2 b) { return std::tie(a.x, a.y) < std::tie(b.x, b.y); });
    Vec2 sum{};
    for (Vec2 p : pts) sum = sum + p;
    GoalCandidate c;
    c.centroid = sum * (1.0 / static_cast<double>(pts.size()));
    c.visibility = static_cast<int>(states.size());
    c.view_count = pts.size();
    out.push_back(c);
  }
  std::sort(out.begin(), out.end(), [](const GoalCandidate& a, const GoalCandidate& b) {
    return std::tie(a.centroid.x, a.centroid.y) < std::tie(b.centroid.x, b.centroid.y);
  });
  return out;
}

std::optional<GoalCandidate> select_goal(const std::vector<GoalCandidate>& candidates, Vec2 agent_pos,
                                         const GoalQueryConfig& cfg) {
  std::vector<const GoalCandidate*> eligible;
  for (const GoalCandidate& c : candidates) {
    if (c.visibility < cfg.min_visibility) continue;
    const bool excluded = std::any_of(cfg.excluded.begin(), cfg.excluded.end(),
                                      [&](Vec2 e) { return distance(e, c.centroid) <= cfg.cluster_radius; });
    if (!excluded) eligible.push_back(&c);
  }
  if (eligible.empty()) return std::nullopt;
  auto closer = [&](const GoalCandidate* a, const GoalCandidate* b) {
    const double da = distance(a->centroid, agent_pos);
    const double db = distance(b->centroid, agent_pos);
    if (da != db) return da < db;
    return std::tie(a->centroid.x, a->centroid.y) < std::tie(b->centroid.x, b->centroid.y);
  };
  std::sort(eligible.begin(), eligible.end(), [&](const GoalCandidate* a, const GoalCandidate* b) {
    if (a->visibility != b->visibility) return a->visibility > b->visibility;
    return closer(a, b);
  });
  if (eligible.size() > cfg.top_k) eligible.resize(std::max<std::size_t>(cfg.top_k, 1));
  return **std::min_element(eligible.begin(), eligible.end(), closer);
}

std::optional<Vec2> query_goal(const AbstractModel& model, int goal_class, Vec2 agent_pos,
                               const GoalQueryConfig& cfg) {
  const auto c = select_goal(goal_candidates(model, goal_class, cfg.cluster_radius), agent_pos, cfg);
  if (!c) return std::nullopt;
  return c->centroid;
}

namespace {

using nlohmann::json;

json model_json(const AbstractModel& m, const std::string& map_file) {
  json j;
  j["format"] = "absnav-model";
  j["version"] = kModelFormatVersion;
  j["id"] = m.id;
  j["transition_conflicts"] = m.transition_conflicts;
  j["map"] = map_file;
  j["states"] = json::array();
  for (const auto& s : m.states) {
    json js;
    js["id"] = s.id;
    js["anchor"] = {s.anchor_pose.x, s.anchor_pose.y, s.anchor_pose.theta};
    js["features"] = s.features.values;
    js["views"] = json::array();
    for (const auto& v : s.object_views)
      js["views"].push_back({{"class_id", v.class_id},
                             {"x", v.map_position.x},
                             {"y", v.map_position.y},
                             {"bbox", {v.bbox.angle_min, v.bbox.angle_max, v.bbox.range_min, v.bbox.range_max}},
                             {"distance", v.distance}});
    j["states"].push_back(std::move(js));
  }
  j["transitions"] = json::array();
  for (const auto& [key, next] : m.transitions) j["transitions"].push_back({key.first, to_string(key.second), next});
  return j;
}

}  // namespace

void save_model(const AbstractModel& model, const std::filesystem::path& path) {
  std::filesystem::path occ = path;
  occ.replace_extension(".occ");
  {
    std::ofstream out(occ);
    if (!out) throw FormatError("cannot write " + occ.string());
    write_occ(model.map, out);
  }
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << model_json(model, occ.filename().string()).dump() << "\n";
}

AbstractModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  AbstractModel m;
  std::string map_file;
  try {
    const json j = json::parse(in);
    if (j.value("format", "") != "absnav-model") throw FormatError(path.string() + ": not a model file");
    if (j.at("version").get<int>() != kModelFormatVersion)
      throw FormatError(path.string() + ": unsupported model version");
    m.id = j.at("id").get<int>();
    m.transition_conflicts = j.value("transition_conflicts", std::size_t{0});
    map_file = j.at("map").get<std::string>();
    for (const auto& js : j.at("states")) {
      AbstractState s;
      s.id = js.at("id").get<int>();
      const auto a = js.at("anchor");
      s.anchor_pose = {a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>()};
      s.features.values = js.at("features").get<std::vector<double>>();
      for (const auto& v : js.at("views")) {
        ObjectView ov;
        ov.class_id = v.at("class_id").get<int>();
        ov.map_position = {v.at("x").get<double>(), v.at("y").get<double>()};
        const auto b = v.at("bbox");
        ov.bbox = {b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(), b.at(3).get<double>()};
        ov.distance = v.at("distance").get<double>();
        s.object_views.push_back(ov);
        s.classes.insert(ov.class_id);
      }
      if (s.id != static_cast<int>(m.states.size())) throw FormatError(path.string() + ": state ids not dense");
      m.states.push_back(std::move(s));
    }
    const auto n = static_cast<int>(m.states.size());
    for (const auto& t : j.at("transitions")) {
      const int a = t.at(0).get<int>();
      const int b = t.at(2).get<int>();
      if (a < 0 || a >= n || b < 0 || b >= n) throw FormatError(path.string() + ": dangling transition");
      const Action act = action_from_string(t.at(1).get<std::string>());
      if (!m.transitions.try_emplace({a, act}, b).second)
        throw FormatError(path.string() + ": duplicate transition");
    }
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  std::ifstream occ(path.parent_path() / map_file);
  if (!occ) throw FormatError("cannot open map " + (path.parent_path() / map_file).string());
  m.map = read_occ(occ);
  return m;
}

void save_store(const ModelStore& store, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json index = json::array();
  for (const auto& m : store.models) {
    const std::string name = "model_" + std::to_string(m.id) + ".json";
    save_model(m, dir / name);
    index.push_back(name);
  }
  std::ofstream out(dir / "store.json");
  if (!out) throw FormatError("cannot write store index in " + dir.string());
  out << json{{"format", "absnav-store"}, {"version", kModelFormatVersion}, {"models", index}}.dump(2) << "\n";
}

ModelStore load_store(const std::filesystem::path& dir) {
  std::ifstream in(dir / "store.json");
  if (!in) throw FormatError("cannot open store index in " + dir.string());
  ModelStore store;
  try {
    const json j = json::parse(in);
    for (const auto& name : j.at("models")) store.models.push_back(load_model(dir / name.get<std::string>()));
  } catch (const json::exception& e) {
    throw FormatError(dir.string() + "/store.json: " + e.what());
  }
  std::set<int> ids;
  for (const auto& m : store.models)
    if (!ids.insert(m.id).second) throw FormatError("store has duplicate model ids");
  return store;
}

}  // namespace absnav
