#include "lungfpr/checkpoint.hpp"

#include <algorithm>
#include <fstream>

#include "binary_io.hpp"

namespace lungfpr::train {

namespace {

constexpr char kMagic[4] = {'N', 'D', 'L', '1'};
constexpr std::uint32_t kMaxRank = 8;

}  // namespace

void save_tensors(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  using detail::write_le;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot open " + path.string() + " for writing");
  out.write(kMagic, 4);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    detail::write_string(out, name);
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) write_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    write_le<std::uint64_t>(out, t.size());
  }
  for (const auto& entry : tensors) {
    for (float v : entry.tensor) write_le<float>(out, v);
  }
  if (!out) throw CheckpointError("write failed: " + path.string());
}

std::vector<NamedTensor> load_tensors(const std::filesystem::path& path) {
  using detail::read_le;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  char magic[4] = {};
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kMagic)) throw CheckpointError("bad magic");

  std::uint32_t count = 0;
  if (!read_le(in, count)) throw CheckpointError("shape manifest mismatch: missing entry count");
  std::vector<Shape> shapes;
  std::vector<std::string> names;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name;
    std::uint32_t rank = 0;
    if (!detail::read_string(in, name) || !read_le(in, rank) || rank == 0 || rank > kMaxRank) {
      throw CheckpointError("shape manifest mismatch: malformed entry " + std::to_string(i));
    }
    Shape shape(rank);
    for (auto& d : shape) {
      std::uint32_t v = 0;
      if (!read_le(in, v) || v == 0) throw CheckpointError("shape manifest mismatch: malformed dims in " + name);
      d = v;
    }
    std::uint64_t elements = 0;
    if (!read_le(in, elements)) throw CheckpointError("shape manifest mismatch: missing element count in " + name);
    if (elements != shape_count(shape)) {
      throw CheckpointError("shape manifest mismatch: " + name + " declares " + std::to_string(elements) +
                            " elements for shape " + shape_string(shape));
    }
    names.push_back(std::move(name));
    shapes.push_back(std::move(shape));
  }

  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    std::vector<float> values(shape_count(shapes[i]));
    for (float& v : values) {
      if (!read_le(in, v)) throw CheckpointError("truncated payload in " + names[i]);
    }
    out.push_back({names[i], Tensor(shapes[i], std::move(values))});
  }
  if (in.peek() != std::char_traits<char>::eof()) throw CheckpointError("shape manifest mismatch: trailing bytes");
  return out;
}

void save_checkpoint(const nn::ModelParams<float>& params, const std::filesystem::path& path) {
  std::vector<NamedTensor> entries;
  const auto tensors = params.tensors();
  for (std::size_t i = 0; i < tensors.size(); ++i) entries.push_back({nn::ModelParams<float>::kNames[i], *tensors[i]});
  save_tensors(path, entries);
}

nn::ModelParams<float> load_checkpoint(const std::filesystem::path& path) {
  std::vector<NamedTensor> entries = load_tensors(path);
  constexpr auto& names = nn::ModelParams<float>::kNames;
  if (entries.size() != names.size()) throw CheckpointError("shape manifest mismatch: expected 8 tensors");
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (entries[i].name != names[i]) {
      throw CheckpointError("shape manifest mismatch: expected " + std::string(names[i]) + ", found " + entries[i].name);
    }
  }

  // conv1 (F1,1,kd,kh,kw), conv2 (F2,F1,..), dense1 (flatten, hidden).
  const Shape& c1 = entries[0].tensor.shape();
  const Shape& c2 = entries[2].tensor.shape();
  const Shape& d1 = entries[4].tensor.shape();
  if (c1.size() != 5 || c2.size() != 5 || d1.size() != 2) throw CheckpointError("shape manifest mismatch: tensor ranks");
  const std::size_t f2 = c2[0];
  std::optional<nn::ModelSpec> spec;
  for (int id = 1; id <= nn::kModelCount; ++id) {
    nn::ModelSpec candidate = nn::ModelSpec::table(id);
    candidate.conv1_filters = c1[0];
    candidate.conv2_filters = f2;
    candidate.kernel = {c1[2], c1[3], c1[4]};
    candidate.hidden_units = d1[1];
    if (candidate.flatten_size() == d1[0]) {
      spec = candidate;
      break;
    }
  }
  if (!spec) throw CheckpointError("shape manifest mismatch: no architecture has flatten size " + std::to_string(d1[0]));

  const auto expected = nn::parameter_shapes(*spec);
  nn::ModelParams<float> params;
  params.spec = *spec;
  auto tensors = params.tensors();
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (entries[i].tensor.shape() != expected[i]) {
      throw CheckpointError("shape manifest mismatch: " + entries[i].name + " has shape " +
                            shape_string(entries[i].tensor.shape()) + ", expected " + shape_string(expected[i]));
    }
    *tensors[i] = std::move(entries[i].tensor);
  }
  return params;
}

}  // namespace lungfpr::train
