#include "copl/checkpoint.hpp"

#include <algorithm>
#include <fstream>

#include "binary_io.hpp"

namespace copl {

namespace {
constexpr char kMagic[5] = {'C', 'O', 'P', 'L', '1'};

void write_array(std::ostream& os, const Scalar* data, Index size) {
  for (Index i = 0; i < size; ++i) detail::write_f64(os, data[i]);
}

void read_array(std::istream& is, Scalar* data, Index size) {
  for (Index i = 0; i < size; ++i) {
    if (!detail::read_f64(is, data[i])) {
      throw CheckpointTruncatedError("truncated checkpoint");
    }
  }
}
}  // namespace

void save_checkpoint(const PromptLearner& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError("cannot open for writing: " + path);
  os.write(kMagic, sizeof(kMagic));
  detail::write_u32(os, static_cast<std::uint32_t>(model.dims.prompt_len));
  detail::write_u32(os, static_cast<std::uint32_t>(model.dims.token_dim));
  detail::write_u32(os, static_cast<std::uint32_t>(model.dims.patch_dim));
  detail::write_u32(os, static_cast<std::uint32_t>(model.dims.meta_hidden()));
  write_array(os, model.prompts.data(), model.prompts.size());
  write_array(os, model.net.u1.data(), model.net.u1.size());
  write_array(os, model.net.c1.data(), model.net.c1.size());
  write_array(os, model.net.u2.data(), model.net.u2.size());
  write_array(os, model.net.c2.data(), model.net.c2.size());
  write_array(os, model.w_a.data(), model.w_a.size());
  if (!os) throw CheckpointError("write failed: " + path);
}

PromptLearner load_checkpoint(const std::string& path, Method method,
                              const ModelDims& dims) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open for reading: " + path);

  char magic[5];
  if (!is.read(magic, sizeof(magic))) {
    throw CheckpointTruncatedError("truncated checkpoint");
  }
  if (!std::equal(magic, magic + sizeof(magic), kMagic)) {
    throw CheckpointBadMagicError("bad magic");
  }
  std::uint32_t prompt_len = 0, token_dim = 0, patch_dim = 0, meta_hidden = 0;
  if (!detail::read_u32(is, prompt_len) || !detail::read_u32(is, token_dim) ||
      !detail::read_u32(is, patch_dim) || !detail::read_u32(is, meta_hidden)) {
    throw CheckpointTruncatedError("truncated checkpoint");
  }
  if (static_cast<int>(prompt_len) != dims.prompt_len ||
      static_cast<int>(token_dim) != dims.token_dim ||
      static_cast<int>(patch_dim) != dims.patch_dim ||
      static_cast<int>(meta_hidden) != dims.meta_hidden()) {
    throw CheckpointDimError("checkpoint dims do not match configuration");
  }

  PromptLearner model;
  model.method = method;
  model.dims = dims;
  model.prompts.resize(dims.prompt_len, dims.token_dim);
  model.net = MetaNet::zeros(dims);
  model.w_a.resize(2 * dims.token_dim);
  read_array(is, model.prompts.data(), model.prompts.size());
  read_array(is, model.net.u1.data(), model.net.u1.size());
  read_array(is, model.net.c1.data(), model.net.c1.size());
  read_array(is, model.net.u2.data(), model.net.u2.size());
  read_array(is, model.net.c2.data(), model.net.c2.size());
  read_array(is, model.w_a.data(), model.w_a.size());
  if (is.peek() != std::ifstream::traits_type::eof()) {
    throw CheckpointDimError("trailing bytes");
  }
  return model;
}

}  // namespace copl
