#include <cstddef>
#include <cstdio>

#include <jpeglib.h>

#include <csetjmp>
#include <cstdlib>
#include <cstring>
#include <vector>

#include "idm/degrade.hpp"

namespace idm {

namespace {

struct JpegErrorMgr {
  jpeg_error_mgr pub;
  std::jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* mgr = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
  std::longjmp(mgr->jump, 1);
}

}  // namespace

ImageTensor jpeg_roundtrip(const ImageTensor& img, int quality) {
  if (quality < 1 || quality > 100) throw std::invalid_argument("jpeg_roundtrip: quality in [1,100]");

  const int h = img.height, w = img.width, c = img.channels;
  std::vector<unsigned char> bytes(static_cast<std::size_t>(h) * w * c);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch)
        bytes[(static_cast<std::size_t>(y) * w + x) * c + ch] = quantize8(img.at(y, x, ch));

  // encode
  unsigned char* encoded = nullptr;
  unsigned long encoded_size = 0;
  {
    jpeg_compress_struct cinfo;
    JpegErrorMgr err;
    cinfo.err = jpeg_std_error(&err.pub);
    err.pub.error_exit = jpeg_error_exit;
    if (setjmp(err.jump)) {
      jpeg_destroy_compress(&cinfo);
      if (encoded) free(encoded);
      throw degradation_error("JPEG encode failed");
    }
    jpeg_create_compress(&cinfo);
    jpeg_mem_dest(&cinfo, &encoded, &encoded_size);
    cinfo.image_width = static_cast<JDIMENSION>(w);
    cinfo.image_height = static_cast<JDIMENSION>(h);
    cinfo.input_components = c;
    cinfo.in_color_space = c == 1 ? JCS_GRAYSCALE : JCS_RGB;
    jpeg_set_defaults(&cinfo);
    jpeg_set_quality(&cinfo, quality, TRUE);
    // 4:4:4 so high quality factors stay near-lossless on small color images
    for (int i = 0; i < cinfo.num_components; ++i) {
      cinfo.comp_info[i].h_samp_factor = 1;
      cinfo.comp_info[i].v_samp_factor = 1;
    }
    jpeg_start_compress(&cinfo, TRUE);
    const std::size_t stride = static_cast<std::size_t>(w) * c;
    while (cinfo.next_scanline < cinfo.image_height) {
      JSAMPROW row = bytes.data() + cinfo.next_scanline * stride;
      jpeg_write_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_compress(&cinfo);
    jpeg_destroy_compress(&cinfo);
  }

  // decode
  ImageTensor out(h, w, c);
  {
    jpeg_decompress_struct dinfo;
    JpegErrorMgr err;
    dinfo.err = jpeg_std_error(&err.pub);
    err.pub.error_exit = jpeg_error_exit;
    if (setjmp(err.jump)) {
      jpeg_destroy_decompress(&dinfo);
      free(encoded);
      throw degradation_error("JPEG decode failed");
    }
    jpeg_create_decompress(&dinfo);
    jpeg_mem_src(&dinfo, encoded, encoded_size);
    jpeg_read_header(&dinfo, TRUE);
    dinfo.out_color_space = c == 1 ? JCS_GRAYSCALE : JCS_RGB;
    jpeg_start_decompress(&dinfo);
    std::vector<unsigned char> row(static_cast<std::size_t>(w) * c);
    int y = 0;
    while (dinfo.output_scanline < dinfo.output_height) {
      JSAMPROW rp = row.data();
      jpeg_read_scanlines(&dinfo, &rp, 1);
      for (int x = 0; x < w; ++x)
        for (int ch = 0; ch < c; ++ch)
          out.at(y, x, ch) = static_cast<float>(row[static_cast<std::size_t>(x) * c + ch]) / 255.0f;
      ++y;
    }
    jpeg_finish_decompress(&dinfo);
    jpeg_destroy_decompress(&dinfo);
  }
  free(encoded);
  return out;
}

}  // namespace idm
