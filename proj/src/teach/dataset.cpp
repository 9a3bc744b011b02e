#include "steer/teach/dataset.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "steer/error.hpp"
#include "steer/util/hash.hpp"

namespace steer::teach {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'S', 'T', 'E', 'E', 'R', 'D', 'S', '1'};

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw Error(Errc::io, "frames.bin: truncated header");
  return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

const char* targets_file(DatasetKind k) { return k == DatasetKind::demo ? "actions.txt" : "labels.txt"; }

std::string targets_text(const std::vector<int>& t) {
  std::string s;
  for (int v : t) {
    s += std::to_string(v);
    s += '\n';
  }
  return s;
}

}  // namespace

std::string_view to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::demo: return "demo";
    case DatasetKind::reward: return "reward";
    case DatasetKind::safety: return "safety";
  }
  return "?";
}

DatasetKind dataset_kind_from_string(std::string_view s) {
  if (s == "demo") return DatasetKind::demo;
  if (s == "reward") return DatasetKind::reward;
  if (s == "safety") return DatasetKind::safety;
  throw Error(Errc::invalid_argument, "unknown dataset kind '" + std::string(s) + "'");
}

void Dataset::validate() const {
  if (observations.size() != targets.size()) {
    throw Error(Errc::invalid_argument, "dataset has " + std::to_string(observations.size()) +
                                            " observations but " + std::to_string(targets.size()) +
                                            " targets");
  }
  for (std::size_t i = 0; i < observations.size(); ++i) {
    const auto& o = observations[i];
    if (o.pixels.size() != sim::Observation::kChannels * o.height * o.width ||
        o.height != observations[0].height || o.width != observations[0].width) {
      throw Error(Errc::invalid_argument, "record " + std::to_string(i) + ": inconsistent frame size");
    }
    const int t = targets[i];
    const bool ok = kind == DatasetKind::demo ? (t >= 0 && t <= 2) : (t == 1 || t == -1);
    if (!ok) {
      throw Error(Errc::invalid_argument,
                  "record " + std::to_string(i) + ": target " + std::to_string(t) + " invalid for " +
                      std::string(to_string(kind)) + " data");
    }
  }
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  Dataset out;
  out.kind = kind;
  out.meta = meta;
  out.observations.reserve(indices.size());
  out.targets.reserve(indices.size());
  for (std::size_t i : indices) {
    out.observations.push_back(observations.at(i));
    out.targets.push_back(targets.at(i));
  }
  return out;
}

std::string dataset_hash(const Dataset& d) {
  util::Sha256 h;
  h.update(to_string(d.kind));
  for (const auto& o : d.observations) h.update(o.pixels);
  h.update(targets_text(d.targets));
  return h.hex();
}

json save_dataset(const Dataset& d, const fs::path& dir) {
  d.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(Errc::io, "cannot create dataset directory " + dir.string() + ": " + ec.message());

  const std::size_t h = d.size() ? d.observations[0].height : 0;
  const std::size_t w = d.size() ? d.observations[0].width : 0;
  {
    std::ofstream out(dir / "frames.bin", std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::io, "cannot write " + (dir / "frames.bin").string());
    out.write(kMagic, 8);
    put_u32(out, static_cast<std::uint32_t>(d.size()));
    put_u32(out, static_cast<std::uint32_t>(sim::Observation::kChannels));
    put_u32(out, static_cast<std::uint32_t>(h));
    put_u32(out, static_cast<std::uint32_t>(w));
    for (const auto& o : d.observations) {
      out.write(reinterpret_cast<const char*>(o.pixels.data()),
                static_cast<std::streamsize>(o.pixels.size()));
    }
    if (!out) throw Error(Errc::io, "write failed for " + (dir / "frames.bin").string());
  }
  {
    std::ofstream out(dir / targets_file(d.kind), std::ios::trunc);
    out << targets_text(d.targets);
    if (!out) throw Error(Errc::io, "write failed for targets file");
  }
  json m = d.meta;
  m["kind"] = std::string(to_string(d.kind));
  m["count"] = d.size();
  m["channels"] = sim::Observation::kChannels;
  m["height"] = h;
  m["width"] = w;
  m["dataset_hash"] = dataset_hash(d);
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  out << m.dump(2) << '\n';
  if (!out) throw Error(Errc::io, "write failed for manifest");
  return m;
}

Dataset load_dataset(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  std::ifstream mf(manifest_path);
  if (!mf) throw Error(Errc::missing_input, "no dataset at " + dir.string() + " (manifest.json missing)");
  json m;
  try {
    m = json::parse(mf);
  } catch (const json::exception& e) {
    throw Error(Errc::io, "manifest " + manifest_path.string() + ": " + e.what());
  }
  Dataset d;
  d.kind = dataset_kind_from_string(m.at("kind").get<std::string>());

  std::ifstream in(dir / "frames.bin", std::ios::binary);
  if (!in) throw Error(Errc::missing_input, "missing " + (dir / "frames.bin").string());
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    throw Error(Errc::io, "frames.bin: bad magic (expected STEERDS1)");
  }
  const std::uint32_t count = get_u32(in), channels = get_u32(in), h = get_u32(in), w = get_u32(in);
  if (channels != sim::Observation::kChannels) throw Error(Errc::io, "frames.bin: expected 6 channels");
  if (count != m.at("count").get<std::size_t>()) {
    throw Error(Errc::io, "frames.bin holds " + std::to_string(count) + " records, manifest says " +
                              m.at("count").dump());
  }
  d.observations.resize(count);
  for (auto& o : d.observations) {
    o.height = h;
    o.width = w;
    o.pixels.resize(static_cast<std::size_t>(channels) * h * w);
    if (!in.read(reinterpret_cast<char*>(o.pixels.data()), static_cast<std::streamsize>(o.pixels.size()))) {
      throw Error(Errc::io, "frames.bin: truncated payload");
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) throw Error(Errc::io, "frames.bin: trailing bytes");

  std::ifstream tf(dir / targets_file(d.kind));
  if (!tf) throw Error(Errc::missing_input, std::string("missing ") + targets_file(d.kind));
  std::string line;
  while (std::getline(tf, line)) {
    if (line.empty()) continue;
    try {
      d.targets.push_back(std::stoi(line));
    } catch (const std::exception&) {
      throw Error(Errc::io, std::string(targets_file(d.kind)) + ": bad line '" + line + "'");
    }
  }
  for (const char* k : {"kind", "count", "channels", "height", "width", "dataset_hash"}) m.erase(k);
  d.meta = std::move(m);
  d.validate();
  return d;
}

}  // namespace steer::teach
