#!/usr/bin/env python3
"""Writes the GB2312 level-1 hanzi (3755 characters), one per line."""
import sys


def level1_chars():
    out = []
    for hi in range(0xB0, 0xD8):
        for lo in range(0xA1, 0xFF):
            if hi == 0xD7 and lo > 0xF9:
                break
            out.append(bytes([hi, lo]).decode("gb2312"))
    return out


def main():
    path = sys.argv[1] if len(sys.argv) > 1 else "data/common_chars.txt"
    chars = level1_chars()
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("# GB2312 level-1 hanzi\n")
        for c in chars:
            f.write(c + "\n")
    print(f"{len(chars)} characters -> {path}")


if __name__ == "__main__":
    main()
