/*
 * Conformance harness: feed feature vectors through a generated model.
 *
 * Usage: <binary> <in.fvf> <out.fvf>
 *
 * Feature vector file layout (little endian):
 *   u32 count, u32 length, then count*length float32 values.
 *
 * Each input vector is copied into the model's input buffer, the model is
 * invoked, and its float32 outputs are appended to the output file in the
 * same layout.  The harness performs no heap allocation: values stream
 * byte-by-byte between the files and the model's own static buffers.
 *
 * Exit codes: 0 ok, 2 usage, 3 file/format error, 4 shape mismatch.
 */

#include <stdint.h>
#include <stdio.h>
#include <string.h>

#include "mut.h"

static int read_u32_le(FILE *f, uint32_t *out)
{
    unsigned char b[4];
    if (fread(b, 1, 4, f) != 4) {
        return 0;
    }
    *out = (uint32_t)b[0] | ((uint32_t)b[1] << 8) | ((uint32_t)b[2] << 16)
         | ((uint32_t)b[3] << 24);
    return 1;
}

static int write_u32_le(FILE *f, uint32_t v)
{
    unsigned char b[4];
    b[0] = (unsigned char)(v & 0xffu);
    b[1] = (unsigned char)((v >> 8) & 0xffu);
    b[2] = (unsigned char)((v >> 16) & 0xffu);
    b[3] = (unsigned char)((v >> 24) & 0xffu);
    return fwrite(b, 1, 4, f) == 4;
}

static int read_f32_le(FILE *f, float *out)
{
    uint32_t u;
    if (!read_u32_le(f, &u)) {
        return 0;
    }
    memcpy(out, &u, 4);
    return 1;
}

static int write_f32_le(FILE *f, float v)
{
    uint32_t u;
    memcpy(&u, &v, 4);
    return write_u32_le(f, u);
}

int main(int argc, char **argv)
{
    FILE *fi;
    FILE *fo;
    uint32_t count;
    uint32_t length;
    uint32_t i;
    uint32_t j;

    if (argc != 3) {
        fprintf(stderr, "usage: %s <in.fvf> <out.fvf>\n", argv[0]);
        return 2;
    }
    fi = fopen(argv[1], "rb");
    if (fi == NULL) {
        fprintf(stderr, "cannot open %s\n", argv[1]);
        return 3;
    }
    if (!read_u32_le(fi, &count) || !read_u32_le(fi, &length)) {
        fprintf(stderr, "%s: truncated header\n", argv[1]);
        fclose(fi);
        return 3;
    }
    if (count > 0 && length != (uint32_t)MUT_INPUT_LEN) {
        fprintf(stderr, "shape mismatch: vectors of %lu values, model expects %lu\n",
                (unsigned long)length, (unsigned long)MUT_INPUT_LEN);
        fclose(fi);
        return 4;
    }
    fo = fopen(argv[2], "wb");
    if (fo == NULL) {
        fprintf(stderr, "cannot open %s\n", argv[2]);
        fclose(fi);
        return 3;
    }
    if (!write_u32_le(fo, count) || !write_u32_le(fo, (uint32_t)MUT_OUTPUT_LEN)) {
        fprintf(stderr, "%s: write failure\n", argv[2]);
        fclose(fi);
        fclose(fo);
        return 3;
    }

    mut_init();
    for (i = 0; i < count; ++i) {
        float *in = mut_input();
        const float *out;
        size_t out_len;
        for (j = 0; j < length; ++j) {
            if (!read_f32_le(fi, &in[j])) {
                fprintf(stderr, "%s: truncated at vector %lu\n", argv[1],
                        (unsigned long)i);
                fclose(fi);
                fclose(fo);
                return 3;
            }
        }
        out = mut_invoke(&out_len);
        if (out_len != (size_t)MUT_OUTPUT_LEN) {
            fprintf(stderr, "invoke returned %lu values, header promised %lu\n",
                    (unsigned long)out_len, (unsigned long)MUT_OUTPUT_LEN);
            fclose(fi);
            fclose(fo);
            return 4;
        }
        for (j = 0; j < (uint32_t)out_len; ++j) {
            if (!write_f32_le(fo, out[j])) {
                fprintf(stderr, "%s: write failure\n", argv[2]);
                fclose(fi);
                fclose(fo);
                return 3;
            }
        }
    }
    fclose(fi);
    if (fclose(fo) != 0) {
        return 3;
    }
    return 0;
}
