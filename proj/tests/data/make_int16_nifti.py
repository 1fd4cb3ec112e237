"""Writes int16_ramp.nii: 7x4x4 int16 volume, value = linear index % 101, scl_slope = 0."""
import struct
import numpy as np

dims = (7, 4, 4)
values = (np.arange(np.prod(dims)) % 101).astype("<i2")  # file order: x fastest
hdr = bytearray(352)
struct.pack_into("<i", hdr, 0, 348)
struct.pack_into("<8h", hdr, 40, 3, *dims, 1, 1, 1, 1)
struct.pack_into("<hh", hdr, 70, 4, 16)  # datatype int16, bitpix
struct.pack_into("<8f", hdr, 76, 1.0, 2.0, 2.0, 5.0, 1, 1, 1, 1)
struct.pack_into("<f", hdr, 108, 352.0)
struct.pack_into("<ff", hdr, 112, 0.0, 0.0)  # scl_slope = 0 -> no scaling
hdr[344:348] = b"n+1\0"
with open("int16_ramp.nii", "wb") as f:
    f.write(bytes(hdr) + values.tobytes())

# Independent decode of what was written.
raw = open("int16_ramp.nii", "rb").read()
(sizeof_hdr,) = struct.unpack_from("<i", raw, 0)
dim = struct.unpack_from("<8h", raw, 40)
(vox,) = struct.unpack_from("<f", raw, 108)
data = np.frombuffer(raw[int(vox):], dtype="<i2").reshape(dim[3], dim[2], dim[1])
print(sizeof_hdr, dim[:4], data[3, 2, 5], data[0, 0, :].tolist(), int(data.sum()))
