#include <png.h>

#include <csetjmp>
#include <cstring>

#include "pointprop/dataio.hpp"

namespace pointprop::io {

namespace {

struct ReadCursor {
    std::span<const std::uint8_t> bytes;
    std::size_t offset = 0;
};

void read_from_span(png_structp png, png_bytep out, png_size_t length) {
    auto* cursor = static_cast<ReadCursor*>(png_get_io_ptr(png));
    if (cursor->offset + length > cursor->bytes.size()) {
        png_error(png, "truncated PNG stream");
    }
    std::memcpy(out, cursor->bytes.data() + cursor->offset, length);
    cursor->offset += length;
}

void append_to_vector(png_structp png, png_bytep data, png_size_t length) {
    auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + length);
}

void flush_noop(png_structp) {}

// libpng reports errors via longjmp; the message is stashed here first.
void on_png_error(png_structp png, png_const_charp message) {
    auto* slot = static_cast<std::string*>(png_get_error_ptr(png));
    if (slot != nullptr) {
        *slot = message;
    }
    png_longjmp(png, 1);
}

void on_png_warning(png_structp, png_const_charp) {}

}  // namespace

RawImage decode_png(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
        throw FormatError("not a PNG file");
    }
    std::string error;
    png_structp png =
        png_create_read_struct(PNG_LIBPNG_VER_STRING, &error, on_png_error, on_png_warning);
    if (png == nullptr) {
        throw FormatError("cannot allocate PNG reader");
    }
    png_infop info = png_create_info_struct(png);
    if (info == nullptr) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw FormatError("cannot allocate PNG info");
    }

    ReadCursor cursor{bytes, 0};
    RawImage image;
    std::vector<png_bytep> rows;
    std::vector<std::uint8_t> buffer;

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("PNG decode failed: " + error);
    }

    png_set_read_fn(png, &cursor, read_from_span);
    png_read_info(png, info);

    const auto color_type = png_get_color_type(png, info);
    const auto bit_depth = png_get_bit_depth(png, info);
    if (color_type == PNG_COLOR_TYPE_PALETTE) {
        png_set_palette_to_rgb(png);
    }
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) {
        png_set_expand_gray_1_2_4_to_8(png);
    }
    if (color_type & PNG_COLOR_MASK_ALPHA) {
        png_set_strip_alpha(png);
    }
    if (png_get_valid(png, info, PNG_INFO_tRNS)) {
        png_set_tRNS_to_alpha(png);
        png_set_strip_alpha(png);
    }
    if (bit_depth == 16) {
        png_set_swap(png);  // host little-endian 16-bit samples
    }
    png_read_update_info(png, info);

    image.dims = {static_cast<int>(png_get_image_width(png, info)),
                  static_cast<int>(png_get_image_height(png, info))};
    image.channels = png_get_channels(png, info);
    image.bit_depth = png_get_bit_depth(png, info);

    const std::size_t row_bytes = png_get_rowbytes(png, info);
    buffer.resize(row_bytes * image.dims.height);
    rows.resize(image.dims.height);
    for (int y = 0; y < image.dims.height; ++y) {
        rows[y] = buffer.data() + row_bytes * y;
    }
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    if (image.channels != 1 && image.channels != 3) {
        throw FormatError("unsupported PNG channel count " + std::to_string(image.channels));
    }
    const std::size_t count = image.dims.pixels() * image.channels;
    image.samples.resize(count);
    if (image.bit_depth == 16) {
        std::memcpy(image.samples.data(), buffer.data(), count * 2);
    } else {
        for (std::size_t i = 0; i < count; ++i) {
            image.samples[i] = buffer[i];
        }
    }
    return image;
}

std::vector<std::uint8_t> encode_png(const RawImage& image) {
    if ((image.channels != 1 && image.channels != 3) ||
        (image.bit_depth != 8 && image.bit_depth != 16)) {
        throw InvalidArgument("PNG encoder supports 8/16-bit gray or RGB only");
    }
    if (image.samples.size() != image.dims.pixels() * image.channels) {
        throw DimensionMismatch("PNG sample count does not match dimensions");
    }

    const std::size_t bytes_per_sample = image.bit_depth / 8;
    const std::size_t row_bytes =
        static_cast<std::size_t>(image.dims.width) * image.channels * bytes_per_sample;
    std::vector<std::uint8_t> buffer(row_bytes * image.dims.height);
    for (std::size_t i = 0; i < image.samples.size(); ++i) {
        if (bytes_per_sample == 1) {
            buffer[i] = static_cast<std::uint8_t>(image.samples[i]);
        } else {
            buffer[2 * i] = static_cast<std::uint8_t>(image.samples[i] >> 8);  // big-endian
            buffer[2 * i + 1] = static_cast<std::uint8_t>(image.samples[i] & 0xFF);
        }
    }

    std::string error;
    png_structp png =
        png_create_write_struct(PNG_LIBPNG_VER_STRING, &error, on_png_error, on_png_warning);
    if (png == nullptr) {
        throw FormatError("cannot allocate PNG writer");
    }
    png_infop info = png_create_info_struct(png);
    if (info == nullptr) {
        png_destroy_write_struct(&png, nullptr);
        throw FormatError("cannot allocate PNG info");
    }

    std::vector<std::uint8_t> out;
    std::vector<png_bytep> rows(image.dims.height);
    for (int y = 0; y < image.dims.height; ++y) {
        rows[y] = buffer.data() + row_bytes * y;
    }

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw FormatError("PNG encode failed: " + error);
    }
    png_set_write_fn(png, &out, append_to_vector, flush_noop);
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.dims.width),
                 static_cast<png_uint_32>(image.dims.height), image.bit_depth,
                 image.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

}  // namespace pointprop::io
