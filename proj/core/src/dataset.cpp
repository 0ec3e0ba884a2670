#include "lad/dataset.hpp"

#include <filesystem>
#include <algorithm>
#include <fstream>

#include "json.hpp"
#include "lad/error.hpp"

namespace lad {

namespace {

using nlohmann::json;

constexpr int kSchemaVersion = 1;

json node_to_json(const NavNode& n) {
  json objects = json::array();
  for (const ObjectInstance& o : n.objects)
    objects.push_back(
        {{"class", o.object_class}, {"sector", o.sector}, {"feature", o.feature}});
  return {{"id", n.id},       {"x", n.x},           {"y", n.y},
          {"room", n.room_type}, {"views", n.views}, {"objects", objects}};
}

NavNode node_from_json(const json& j) {
  NavNode n;
  n.id = j.at("id").get<int>();
  n.x = j.at("x").get<double>();
  n.y = j.at("y").get<double>();
  n.room_type = j.at("room").get<int>();
  n.views = j.at("views").get<std::vector<std::vector<double>>>();
  for (const json& o : j.at("objects")) {
    ObjectInstance obj;
    obj.object_class = o.at("class").get<int>();
    obj.sector = o.at("sector").get<int>();
    obj.feature = o.at("feature").get<std::vector<double>>();
    n.objects.push_back(std::move(obj));
  }
  return n;
}

void check_schema(const json& j, const std::string& path, size_t line) {
  LAD_CHECK(j.contains("schema") && j.at("schema").get<int>() == kSchemaVersion,
            path, " line ", line, ": unsupported schema version");
}

std::vector<json> read_jsonl(const std::string& path) {
  std::ifstream f(path);
  LAD_CHECK(f.good(), "cannot open ", path);
  std::vector<json> records;
  std::string line;
  size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    LAD_CHECK(!j.is_discarded(), path, " line ", lineno, ": invalid record");
    check_schema(j, path, lineno);
    records.push_back(std::move(j));
  }
  return records;
}

}  // namespace

void write_houses_jsonl(const std::string& path,
                        const std::vector<HouseGraph>& houses) {
  std::ofstream f(path, std::ios::trunc);
  LAD_CHECK(f.good(), "cannot write ", path);
  for (const HouseGraph& h : houses) {
    json nodes = json::array();
    for (const NavNode& n : h.nodes) nodes.push_back(node_to_json(n));
    json edges = json::array();
    for (const Edge& e : h.edges) edges.push_back({e.a, e.b, e.length});
    json j = {{"schema", kSchemaVersion},
              {"house_id", h.house_id},
              {"split", h.split},
              {"seed", h.seed},
              {"num_rooms", h.num_rooms},
              {"num_sectors", h.num_sectors},
              {"dim", h.dim},
              {"nodes", nodes},
              {"edges", edges}};
    f << j.dump() << '\n';
  }
  LAD_CHECK(f.good(), "write failed for ", path);
}

std::vector<HouseGraph> read_houses_jsonl(const std::string& path) {
  std::vector<HouseGraph> houses;
  for (const json& j : read_jsonl(path)) {
    HouseGraph h;
    h.house_id = j.at("house_id").get<std::string>();
    h.split = j.at("split").get<std::string>();
    h.seed = j.at("seed").get<uint64_t>();
    h.num_rooms = j.at("num_rooms").get<int>();
    h.num_sectors = j.at("num_sectors").get<int>();
    h.dim = j.at("dim").get<int>();
    for (const json& n : j.at("nodes")) h.nodes.push_back(node_from_json(n));
    for (const json& e : j.at("edges"))
      h.edges.push_back({e.at(0).get<int>(), e.at(1).get<int>(),
                         e.at(2).get<double>()});
    for (const Edge& e : h.edges) {
      h.nodes.at(static_cast<size_t>(e.a)).neighbors.push_back(e.b);
      h.nodes.at(static_cast<size_t>(e.b)).neighbors.push_back(e.a);
    }
    for (NavNode& n : h.nodes)
      std::sort(n.neighbors.begin(), n.neighbors.end());
    houses.push_back(std::move(h));
  }
  return houses;
}

void write_episodes_jsonl(const std::string& path,
                          const std::vector<Episode>& episodes) {
  std::ofstream f(path, std::ios::trunc);
  LAD_CHECK(f.good(), "cannot write ", path);
  for (const Episode& ep : episodes) {
    json j = {{"schema", kSchemaVersion},
              {"episode_id", ep.episode_id},
              {"house_id", ep.house_id},
              {"start", ep.start},
              {"goal", ep.goal},
              {"target_object_index", ep.target_object_index},
              {"target_object_class", ep.target_object_class},
              {"tokens", ep.tokens},
              {"gold_path", ep.gold_path},
              {"gold_length", ep.gold_length}};
    f << j.dump() << '\n';
  }
  LAD_CHECK(f.good(), "write failed for ", path);
}

std::vector<Episode> read_episodes_jsonl(const std::string& path) {
  std::vector<Episode> episodes;
  for (const json& j : read_jsonl(path)) {
    Episode ep;
    ep.episode_id = j.at("episode_id").get<std::string>();
    ep.house_id = j.at("house_id").get<std::string>();
    ep.start = j.at("start").get<int>();
    ep.goal = j.at("goal").get<int>();
    ep.target_object_index = j.at("target_object_index").get<int>();
    ep.target_object_class = j.at("target_object_class").get<int>();
    ep.tokens = j.at("tokens").get<std::vector<int>>();
    ep.gold_path = j.at("gold_path").get<std::vector<int>>();
    ep.gold_length = j.at("gold_length").get<double>();
    episodes.push_back(std::move(ep));
  }
  return episodes;
}

DatasetPaths DatasetPaths::in_dir(const std::string& dir) {
  DatasetPaths p;
  p.houses_train = dir + "/houses.train.jsonl";
  p.houses_val_unseen = dir + "/houses.val_unseen.jsonl";
  p.episodes_train = dir + "/episodes.train.jsonl";
  p.episodes_val_seen = dir + "/episodes.val_seen.jsonl";
  p.episodes_val_unseen = dir + "/episodes.val_unseen.jsonl";
  return p;
}

std::vector<std::string> DatasetPaths::all() const {
  return {houses_train, houses_val_unseen, episodes_train, episodes_val_seen,
          episodes_val_unseen};
}

namespace {

std::string zero_pad(int v, int width) {
  std::string s = std::to_string(v);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

std::vector<Episode> sample_split_episodes(const std::vector<HouseGraph>& houses,
                                           const EpisodeConfig& ep_cfg,
                                           const Rng& master, const std::string& tag,
                                           int per_house) {
  std::vector<Episode> eps;
  for (size_t hi = 0; hi < houses.size(); ++hi) {
    for (int j = 0; j < per_house; ++j) {
      Rng rng = master.child(tag, hi, static_cast<uint64_t>(j));
      const std::string id =
          tag + "-" + zero_pad(static_cast<int>(hi), 4) + "-" + zero_pad(j, 2);
      eps.push_back(sample_episode(houses[hi], ep_cfg, rng, id));
    }
  }
  return eps;
}

}  // namespace

DatasetPaths generate_dataset(const Config& cfg, uint64_t seed,
                              const std::string& out_dir) {
  const GenConfig gen = GenConfig::from_config(cfg);
  const EpisodeConfig ep_cfg = EpisodeConfig::from_config(cfg);
  const int train_houses = cfg.get_int("data.train_houses", 200);
  const int unseen_houses = cfg.get_int("data.val_unseen_houses", 50);
  const int train_eps = cfg.get_int("data.episodes_per_house", 5);
  const int val_seen_eps_per_house = cfg.get_int("data.val_seen_episodes_per_house", 1);
  const int unseen_eps = cfg.get_int("data.val_unseen_episodes_per_house", 2);
  LAD_CHECK(train_houses > 0 && unseen_houses > 0, "gen-data: house counts must be positive");

  std::filesystem::create_directories(out_dir);
  const Rng master(seed);

  std::vector<HouseGraph> train, unseen;
  for (int i = 0; i < train_houses; ++i) {
    Rng h = master.child("house.train", static_cast<uint64_t>(i));
    train.push_back(generate_house(gen, h.next_u64(),
                                   "train-" + zero_pad(i, 4), "train"));
  }
  for (int i = 0; i < unseen_houses; ++i) {
    Rng h = master.child("house.unseen", static_cast<uint64_t>(i));
    unseen.push_back(generate_house(gen, h.next_u64(),
                                    "unseen-" + zero_pad(i, 4), "val-unseen"));
  }

  const DatasetPaths paths = DatasetPaths::in_dir(out_dir);
  write_houses_jsonl(paths.houses_train, train);
  write_houses_jsonl(paths.houses_val_unseen, unseen);
  write_episodes_jsonl(paths.episodes_train,
                       sample_split_episodes(train, ep_cfg, master, "train", train_eps));
  write_episodes_jsonl(
      paths.episodes_val_seen,
      sample_split_episodes(train, ep_cfg, master, "valseen", val_seen_eps_per_house));
  write_episodes_jsonl(
      paths.episodes_val_unseen,
      sample_split_episodes(unseen, ep_cfg, master, "valunseen", unseen_eps));
  return paths;
}

HouseIndex::HouseIndex(std::vector<HouseGraph> houses) { add(std::move(houses)); }

void HouseIndex::add(std::vector<HouseGraph> houses) {
  for (HouseGraph& h : houses) {
    LAD_CHECK(!by_id_.count(h.house_id), "duplicate house id ", h.house_id);
    by_id_[h.house_id] = houses_.size();
    houses_.push_back(std::move(h));
  }
}

const HouseGraph& HouseIndex::get(const std::string& house_id) const {
  auto it = by_id_.find(house_id);
  LAD_CHECK(it != by_id_.end(), "unknown house id ", house_id);
  return houses_[it->second];
}

}  // namespace lad
