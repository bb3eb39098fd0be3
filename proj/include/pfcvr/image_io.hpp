#pragma once

#include <cmath>
#include <fstream>
#include <string>

#include "pfcvr/featurespace.hpp"

namespace pfcvr {

// Binary PPM (P6, maxval 255). Values clamp to [0,1] on write and come back
// as byte/255, so write-then-read is exact for byte-quantized images.
inline void write_ppm(const std::string& path, const Image& img) {
    check(img.h > 0 && img.w > 0, "write_ppm: empty image");
    std::ofstream out(path, std::ios::binary);
    check(out.good(), "write_ppm: cannot open " + path);
    out << "P6\n" << img.w << " " << img.h << "\n255\n";
    std::string bytes;
    bytes.reserve(img.px.size());
    for (double v : img.px) {
        double c = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
        bytes.push_back(static_cast<char>(static_cast<unsigned char>(std::llround(c * 255.0))));
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    check(out.good(), "write_ppm: write failed for " + path);
}

inline Image read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    check(in.good(), "read_ppm: cannot open " + path);
    std::string magic;
    in >> magic;
    check(magic == "P6", "read_ppm: not a P6 file: " + path);
    auto next_int = [&in, &path]() {
        // skip whitespace and '#' comment lines between header fields
        int c = in.peek();
        while (c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '#') {
            if (c == '#') {
                std::string line;
                std::getline(in, line);
            } else {
                in.get();
            }
            c = in.peek();
        }
        int v = 0;
        in >> v;
        check(in.good(), "read_ppm: bad header in " + path);
        return v;
    };
    int w = next_int(), h = next_int(), maxval = next_int();
    check(w > 0 && h > 0, "read_ppm: bad dimensions in " + path);
    check(maxval == 255, "read_ppm: unsupported maxval in " + path);
    in.get();  // single whitespace after maxval
    Image img(h, w);
    std::string bytes(static_cast<size_t>(h) * w * 3, '\0');
    in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    check(in.gcount() == static_cast<std::streamsize>(bytes.size()),
          "read_ppm: truncated pixel data in " + path);
    for (size_t i = 0; i < bytes.size(); ++i)
        img.px[i] = static_cast<double>(static_cast<unsigned char>(bytes[i])) / 255.0;
    return img;
}

}  // namespace pfcvr
