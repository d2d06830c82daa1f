#pragma once

// Minimal in-memory PNG encode/decode for single-channel 8/16-bit rasters and
// 8-bit RGB images, on top of libpng.
//
// libpng reports errors by longjmp. Every libpng call lives in a function
// whose own frame holds only trivially destructible locals; all owning
// objects sit in a context struct owned by the caller.

#include <png.h>

#include <csetjmp>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "bevseg/error.hpp"
#include "bevseg/raster.hpp"

namespace bevseg::png {

inline constexpr std::uint32_t kMaxDimension = 1u << 15;

struct Decoded {
  std::size_t width = 0;
  std::size_t height = 0;
  int bit_depth = 0;
  int color_type = 0;
  // Samples in host order; 8-bit images use the low byte.
  std::vector<std::uint16_t> samples;
};

namespace detail {

struct ReadContext {
  std::span<const std::uint8_t> input;
  std::size_t pos = 0;
  bool truncated = false;
  char message[256] = {};
  png_structp png = nullptr;
  png_infop info = nullptr;
  std::vector<std::uint8_t> pixels;
  std::vector<png_bytep> rows;
  Decoded out;

  ~ReadContext() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
  }
};

struct WriteContext {
  std::vector<std::uint8_t> output;
  char message[256] = {};
  png_structp png = nullptr;
  png_infop info = nullptr;

  ~WriteContext() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
  }
};

template <typename Ctx>
void on_error(png_structp png, png_const_charp msg) {
  auto* ctx = static_cast<Ctx*>(png_get_error_ptr(png));
  std::strncpy(ctx->message, msg ? msg : "libpng error", sizeof(ctx->message) - 1);
  png_longjmp(png, 1);
}

inline void on_warning(png_structp, png_const_charp) {}

inline void read_bytes(png_structp png, png_bytep dst, png_size_t len) {
  auto* ctx = static_cast<ReadContext*>(png_get_io_ptr(png));
  if (len > ctx->input.size() - ctx->pos) {
    ctx->truncated = true;
    png_error(png, "unexpected end of data");
  }
  std::memcpy(dst, ctx->input.data() + ctx->pos, len);
  ctx->pos += len;
}

inline void write_bytes(png_structp png, png_bytep src, png_size_t len) {
  auto* ctx = static_cast<WriteContext*>(png_get_io_ptr(png));
  ctx->output.insert(ctx->output.end(), src, src + len);
}

inline void flush_noop(png_structp) {}

// Returns 0 on success, 1 on a libpng error, 2 on a rejected layout.
inline int decode_header(ReadContext* ctx) {
  if (setjmp(png_jmpbuf(ctx->png))) return 1;
  png_set_read_fn(ctx->png, ctx, read_bytes);
  png_set_user_limits(ctx->png, kMaxDimension, kMaxDimension);
  png_read_info(ctx->png, ctx->info);
  ctx->out.width = png_get_image_width(ctx->png, ctx->info);
  ctx->out.height = png_get_image_height(ctx->png, ctx->info);
  ctx->out.bit_depth = png_get_bit_depth(ctx->png, ctx->info);
  ctx->out.color_type = png_get_color_type(ctx->png, ctx->info);
  if (ctx->out.color_type != PNG_COLOR_TYPE_GRAY && ctx->out.color_type != PNG_COLOR_TYPE_RGB) return 2;
  if (ctx->out.bit_depth != 8 && ctx->out.bit_depth != 16) return 2;
  if (ctx->out.bit_depth == 16) png_set_swap(ctx->png);
  png_set_interlace_handling(ctx->png);
  png_read_update_info(ctx->png, ctx->info);
  return 0;
}

inline int decode_pixels(ReadContext* ctx) {
  if (setjmp(png_jmpbuf(ctx->png))) return 1;
  png_read_image(ctx->png, ctx->rows.data());
  png_read_end(ctx->png, nullptr);
  return 0;
}

inline int encode_impl(WriteContext* ctx, std::uint32_t width, std::uint32_t height, int bit_depth, int color_type,
                       png_bytep* rows) {
  if (setjmp(png_jmpbuf(ctx->png))) return 1;
  png_set_write_fn(ctx->png, ctx, write_bytes, flush_noop);
  png_set_IHDR(ctx->png, ctx->info, width, height, bit_depth, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(ctx->png, 6);
  png_write_info(ctx->png, ctx->info);
  if (bit_depth == 16) png_set_swap(ctx->png);
  png_write_image(ctx->png, rows);
  png_write_end(ctx->png, nullptr);
  return 0;
}

inline std::vector<std::uint8_t> encode(std::uint32_t width, std::uint32_t height, int bit_depth, int color_type,
                                        std::span<const std::uint8_t> pixels, const char* module) {
  if (width == 0 || height == 0 || width > kMaxDimension || height > kMaxDimension)
    throw Error(ErrorKind::invalid_input, module, "image dimensions out of range for PNG");
  const std::size_t channels = color_type == PNG_COLOR_TYPE_RGB ? 3 : 1;
  const std::size_t stride = width * channels * (bit_depth / 8);
  if (pixels.size() != stride * height) throw Error(ErrorKind::invalid_input, module, "pixel buffer size mismatch");
  WriteContext ctx;
  ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &ctx, on_error<WriteContext>, on_warning);
  if (!ctx.png) throw Error(ErrorKind::invalid_state, module, "cannot initialise PNG writer");
  ctx.info = png_create_info_struct(ctx.png);
  if (!ctx.info) throw Error(ErrorKind::invalid_state, module, "cannot initialise PNG writer");
  std::vector<png_bytep> rows(height);
  auto* base = const_cast<std::uint8_t*>(pixels.data());
  for (std::size_t r = 0; r < height; ++r) rows[r] = base + r * stride;
  if (encode_impl(&ctx, width, height, bit_depth, color_type, rows.data()) != 0)
    throw Error(ErrorKind::invalid_state, module, std::string("PNG encoding failed: ") + ctx.message);
  return std::move(ctx.output);
}

}  // namespace detail

inline bool has_signature(std::span<const std::uint8_t> bytes) {
  return bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0;
}

// Decodes an 8/16-bit grayscale or 8-bit RGB PNG. Errors: malformed_header for
// bad signatures, unsupported layouts or corrupt streams; truncated when the
// data ends early.
inline Decoded decode(std::span<const std::uint8_t> bytes, const char* module) {
  if (!has_signature(bytes)) {
    if (bytes.size() < 8 && png_sig_cmp(bytes.data(), 0, bytes.size()) == 0 && !bytes.empty())
      throw Error(ErrorKind::truncated, module, "PNG stream ends inside the signature");
    throw Error(ErrorKind::malformed_header, module, "not a PNG stream");
  }
  detail::ReadContext ctx;
  ctx.input = bytes;
  ctx.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &ctx, detail::on_error<detail::ReadContext>,
                                   detail::on_warning);
  if (!ctx.png) throw Error(ErrorKind::invalid_state, module, "cannot initialise PNG reader");
  ctx.info = png_create_info_struct(ctx.png);
  if (!ctx.info) throw Error(ErrorKind::invalid_state, module, "cannot initialise PNG reader");

  auto fail = [&](const char* stage) {
    const auto kind = ctx.truncated ? ErrorKind::truncated : ErrorKind::malformed_header;
    throw Error(kind, module, std::string(stage) + ": " + ctx.message);
  };
  const int header = detail::decode_header(&ctx);
  if (header == 1) fail("invalid PNG header");
  if (header == 2)
    throw Error(ErrorKind::malformed_header, module,
                "unsupported PNG layout (need 8/16-bit grayscale or 8-bit RGB)");
  if (ctx.out.color_type == PNG_COLOR_TYPE_RGB && ctx.out.bit_depth != 8)
    throw Error(ErrorKind::malformed_header, module, "16-bit RGB PNGs are not supported");

  const std::size_t channels = ctx.out.color_type == PNG_COLOR_TYPE_RGB ? 3 : 1;
  const std::size_t bytes_per_sample = static_cast<std::size_t>(ctx.out.bit_depth) / 8;
  const std::size_t stride = ctx.out.width * channels * bytes_per_sample;
  if (png_get_rowbytes(ctx.png, ctx.info) != stride)
    throw Error(ErrorKind::malformed_header, module, "unexpected PNG row layout");
  // A compressed stream cannot plausibly inflate beyond ~1000:1; refuse to
  // allocate for headers that promise far more than the input could carry.
  if (stride * ctx.out.height > bytes.size() * 1032 + (1u << 16))
    throw Error(ErrorKind::truncated, module, "PNG data too short for its declared dimensions");
  ctx.pixels.resize(stride * ctx.out.height);
  ctx.rows.resize(ctx.out.height);
  for (std::size_t r = 0; r < ctx.out.height; ++r) ctx.rows[r] = ctx.pixels.data() + r * stride;
  if (detail::decode_pixels(&ctx) != 0) fail("corrupt PNG data");

  Decoded out = std::move(ctx.out);
  out.samples.resize(out.width * out.height * channels);
  if (bytes_per_sample == 1) {
    for (std::size_t i = 0; i < out.samples.size(); ++i) out.samples[i] = ctx.pixels[i];
  } else {
    std::memcpy(out.samples.data(), ctx.pixels.data(), out.samples.size() * 2);
  }
  return out;
}

inline std::vector<std::uint8_t> encode_gray8(const Raster<std::uint8_t>& img, const char* module) {
  return detail::encode(static_cast<std::uint32_t>(img.cols()), static_cast<std::uint32_t>(img.rows()), 8,
                        PNG_COLOR_TYPE_GRAY, img.values(), module);
}

inline std::vector<std::uint8_t> encode_gray16(const Raster<std::uint16_t>& img, const char* module) {
  std::vector<std::uint8_t> raw(img.size() * 2);
  std::memcpy(raw.data(), img.values().data(), raw.size());
  return detail::encode(static_cast<std::uint32_t>(img.cols()), static_cast<std::uint32_t>(img.rows()), 16,
                        PNG_COLOR_TYPE_GRAY, raw, module);
}

inline std::vector<std::uint8_t> encode_rgb8(std::size_t width, std::size_t height, std::span<const std::uint8_t> rgb,
                                             const char* module) {
  return detail::encode(static_cast<std::uint32_t>(width), static_cast<std::uint32_t>(height), 8,
                        PNG_COLOR_TYPE_RGB, rgb, module);
}

}  // namespace bevseg::png
