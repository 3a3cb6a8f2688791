// SPDX-License-Identifier: Apache-2.0

#include "fad/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "fad/fsio.hpp"

namespace fad {

uint8_t diffusion_to_byte(float x) {
    float u = (x + 1.0f) * 127.5f;
    if (u < 0.0f) u = 0.0f;
    if (u > 255.0f) u = 255.0f;
    return static_cast<uint8_t>(std::nearbyintf(u));  // ties to even
}

float byte_to_diffusion(uint8_t b) {
    return static_cast<float>(b) * 2.0f / 255.0f - 1.0f;
}

std::vector<uint8_t> image_to_bytes(const TensorF& img) {
    if (img.ndim() != 3 || img.dim(0) != 1)
        throw std::invalid_argument("image_to_bytes: expected (1,H,W)");
    std::vector<uint8_t> out(img.numel());
    for (size_t i = 0; i < img.numel(); ++i) out[i] = diffusion_to_byte(img[i]);
    return out;
}

TensorF bytes_to_image(const std::vector<uint8_t>& b, int h, int w) {
    if (b.size() != static_cast<size_t>(h) * w)
        throw std::invalid_argument("bytes_to_image: size mismatch");
    TensorF img({1, h, w});
    for (size_t i = 0; i < b.size(); ++i) img[i] = byte_to_diffusion(b[i]);
    return img;
}

namespace {

uint32_t crc32_bytes(const uint8_t* data, size_t n, uint32_t crc = 0xffffffffu) {
    static uint32_t table[256];
    static bool ready = false;
    if (!ready) {
        for (uint32_t i = 0; i < 256; ++i) {
            uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
            table[i] = c;
        }
        ready = true;
    }
    for (size_t i = 0; i < n; ++i) crc = table[(crc ^ data[i]) & 0xff] ^ (crc >> 8);
    return crc;
}

void put_u32_be(std::string& out, uint32_t v) {
    out.push_back(static_cast<char>((v >> 24) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>(v & 0xff));
}

void append_chunk(std::string& out, const char type[4], const std::string& payload) {
    put_u32_be(out, static_cast<uint32_t>(payload.size()));
    std::string body(type, 4);
    body += payload;
    out += body;
    const uint32_t crc =
        crc32_bytes(reinterpret_cast<const uint8_t*>(body.data()), body.size()) ^
        0xffffffffu;
    put_u32_be(out, crc);
}

}  // namespace

std::string encode_gray_png(const uint8_t* pixels, int width, int height) {
    if (width < 1 || height < 1) throw std::invalid_argument("png: empty image");

    // Raw scanlines: filter byte 0 per row.
    std::string raw;
    raw.reserve(static_cast<size_t>(height) * (width + 1));
    for (int y = 0; y < height; ++y) {
        raw.push_back('\0');
        raw.append(reinterpret_cast<const char*>(pixels + static_cast<size_t>(y) * width),
                   static_cast<size_t>(width));
    }

    // zlib stream with stored (uncompressed) deflate blocks.
    std::string z;
    z.push_back('\x78');
    z.push_back('\x01');
    size_t off = 0;
    while (off < raw.size()) {
        const size_t len = std::min<size_t>(65535, raw.size() - off);
        const bool last = off + len == raw.size();
        z.push_back(last ? '\x01' : '\x00');
        z.push_back(static_cast<char>(len & 0xff));
        z.push_back(static_cast<char>((len >> 8) & 0xff));
        z.push_back(static_cast<char>(~len & 0xff));
        z.push_back(static_cast<char>((~len >> 8) & 0xff));
        z.append(raw, off, len);
        off += len;
    }
    uint32_t s1 = 1, s2 = 0;
    for (unsigned char c : raw) {
        s1 = (s1 + c) % 65521;
        s2 = (s2 + s1) % 65521;
    }
    put_u32_be(z, (s2 << 16) | s1);

    std::string ihdr;
    put_u32_be(ihdr, static_cast<uint32_t>(width));
    put_u32_be(ihdr, static_cast<uint32_t>(height));
    ihdr.push_back('\x08');  // bit depth
    ihdr.push_back('\x00');  // color type: grayscale
    ihdr.push_back('\x00');  // compression
    ihdr.push_back('\x00');  // filter
    ihdr.push_back('\x00');  // interlace

    std::string out("\x89PNG\r\n\x1a\n", 8);
    append_chunk(out, "IHDR", ihdr);
    append_chunk(out, "IDAT", z);
    append_chunk(out, "IEND", "");
    return out;
}

void write_gray_png(const std::filesystem::path& path, const uint8_t* pixels, int width,
                    int height) {
    atomic_write_file(path, encode_gray_png(pixels, width, height));
}

LoadedImage load_png_unit(const std::filesystem::path& path) {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.string().c_str()))
        throw std::runtime_error("unreadable PNG file: " + path.string() + " (" +
                                 image.message + ")");
    image.format = PNG_FORMAT_RGB;
    std::vector<uint8_t> buffer(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
        const std::string msg = image.message;
        png_image_free(&image);
        throw std::runtime_error("unreadable PNG file: " + path.string() + " (" + msg +
                                 ")");
    }

    LoadedImage out;
    out.width = static_cast<int>(image.width);
    out.height = static_cast<int>(image.height);
    out.unit.resize(static_cast<size_t>(out.width) * out.height);
    for (size_t i = 0; i < out.unit.size(); ++i) {
        const int r = buffer[3 * i], g = buffer[3 * i + 1], b = buffer[3 * i + 2];
        // Integer luminance keeps 8-bit grayscale files bit-exact on reload.
        out.unit[i] = static_cast<double>(299 * r + 587 * g + 114 * b) / (1000.0 * 255.0);
    }
    return out;
}

}  // namespace fad
