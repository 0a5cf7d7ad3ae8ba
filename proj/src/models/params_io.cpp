#include <fstream>
#include <sstream>

#include "resmotion/core/errors.hpp"
#include "resmotion/models/model.hpp"
#include "resmotion/util/binary_io.hpp"
#include "resmotion/util/hash.hpp"

namespace resmotion::models {

void write_param_file(std::ostream& os, const ParamFile& file) {
  io::write_magic(os, "RMP1");
  io::write_le<std::uint64_t>(os, file.config_hash);
  io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(file.dtype));
  io::write_string(os, file.metadata);
  io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(file.tensors.size()));
  for (const auto& [name, t] : file.tensors) {
    io::write_string(os, name);
    io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(d));
  }
  for (const auto& [name, t] : file.tensors) {
    for (double v : t.values()) {
      if (file.dtype == ParamDType::f64) {
        io::write_le<double>(os, v);
      } else {
        io::write_le<float>(os, static_cast<float>(v));
      }
    }
  }
}

ParamFile read_param_file(std::istream& is) {
  io::expect_magic(is, "RMP1");
  ParamFile file;
  file.config_hash = io::read_le<std::uint64_t>(is, "config hash");
  const auto tag = io::read_le<std::uint32_t>(is, "dtype");
  if (tag != 1 && tag != 2) throw FormatError("parameter file: unknown dtype tag " + std::to_string(tag));
  file.dtype = static_cast<ParamDType>(tag);
  file.metadata = io::read_string(is, "metadata");
  const auto count = io::read_le<std::uint32_t>(is, "tensor count");
  if (count > (1u << 20)) throw FormatError("parameter file: implausible tensor count");
  std::vector<std::pair<std::string, Shape>> table;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = io::read_string(is, "tensor name", 4096);
    const auto rank = io::read_le<std::uint32_t>(is, "rank");
    if (rank == 0 || rank > 8) throw FormatError("parameter file: bad rank for " + name);
    Shape shape(rank);
    for (auto& d : shape) {
      d = io::read_le<std::uint32_t>(is, "extent");
      if (d == 0) throw FormatError("parameter file: zero extent in " + name);
    }
    table.emplace_back(std::move(name), std::move(shape));
  }
  for (auto& [name, shape] : table) {
    Tensor t(shape);
    for (auto& v : t.values()) {
      v = file.dtype == ParamDType::f64 ? io::read_le<double>(is, "tensor payload")
                                        : static_cast<double>(io::read_le<float>(is, "tensor payload"));
    }
    file.tensors.emplace_back(std::move(name), std::move(t));
  }
  return file;
}

ParamFile snapshot(Model& model, ParamDType dtype, std::string metadata) {
  ParamFile file;
  file.config_hash = model.config().hash();
  file.dtype = dtype;
  file.metadata = metadata.empty() ? model.config().canonical() : std::move(metadata);
  for (const auto& t : model.state()) file.tensors.emplace_back(t.name, *t.tensor);
  return file;
}

void restore(Model& model, const ParamFile& file) {
  if (file.config_hash != model.config().hash()) {
    throw FormatError("parameter file config hash " + util::hex64(file.config_hash) +
                      " does not match model config hash " + util::hex64(model.config().hash()));
  }
  auto state = model.state();
  if (state.size() != file.tensors.size()) {
    throw FormatError("parameter file has " + std::to_string(file.tensors.size()) +
                      " tensors, model has " + std::to_string(state.size()));
  }
  for (std::size_t i = 0; i < state.size(); ++i) {
    const auto& [name, t] = file.tensors[i];
    if (name != state[i].name || t.shape() != state[i].tensor->shape()) {
      throw FormatError("parameter file entry '" + name + "' does not match model tensor '" +
                        state[i].name + "'");
    }
  }
  for (std::size_t i = 0; i < state.size(); ++i) *state[i].tensor = file.tensors[i].second;
}

void save_params(Model& model, const std::filesystem::path& path, ParamDType dtype,
                 const std::string& metadata) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_param_file(out, snapshot(model, dtype, metadata));
  if (!out) throw DataError("write failed for " + path.string());
}

void load_params(Model& model, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  restore(model, read_param_file(in));
}

std::string parameter_hash(Model& model) {
  std::ostringstream os(std::ios::binary);
  ParamFile file = snapshot(model, ParamDType::f64, "-");
  for (const auto& [name, t] : file.tensors) {
    os << name << '\0';
    os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  return util::git_blob_hash(os.str());
}

}  // namespace resmotion::models
