"""Writes aes_128.txt: AES-128 encryption with key expansion as a
Bristol-fashion circuit. Group A is the key, group B the plaintext, the
output the ciphertext; byte j bit k (LSB first) is wire 8j + k of a group.

S-boxes use the 32-AND Boyar-Peralta circuit, so the file has 200 * 32 =
6400 AND gates.
"""

import sys

SBOX_TOP = """
y14 = U3 ^ U5
y13 = U0 ^ U6
y9 = U0 ^ U3
y8 = U0 ^ U5
t0 = U1 ^ U2
y1 = t0 ^ U7
y4 = y1 ^ U3
y12 = y13 ^ y14
y2 = y1 ^ U0
y5 = y1 ^ U6
y3 = y5 ^ y8
t1 = U4 ^ y12
y15 = t1 ^ U5
y20 = t1 ^ U1
y6 = y15 ^ U7
y10 = y15 ^ t0
y11 = y20 ^ y9
y7 = U7 ^ y11
y17 = y10 ^ y11
y19 = y10 ^ y8
y16 = t0 ^ y11
y21 = y13 ^ y16
y18 = U0 ^ y16
t2 = y12 & y15
t3 = y3 & y6
t4 = t3 ^ t2
t5 = y4 & U7
t6 = t5 ^ t2
t7 = y13 & y16
t8 = y5 & y1
t9 = t8 ^ t7
t10 = y2 & y7
t11 = t10 ^ t7
t12 = y9 & y11
t13 = y14 & y17
t14 = t13 ^ t12
t15 = y8 & y10
t16 = t15 ^ t12
t17 = t4 ^ t14
t18 = t6 ^ t16
t19 = t9 ^ t14
t20 = t11 ^ t16
t21 = t17 ^ y20
t22 = t18 ^ y19
t23 = t19 ^ y21
t24 = t20 ^ y18
t25 = t21 ^ t22
t26 = t21 & t23
t27 = t24 ^ t26
t28 = t25 & t27
t29 = t28 ^ t22
t30 = t23 ^ t24
t31 = t22 ^ t26
t32 = t31 & t30
t33 = t32 ^ t24
t34 = t23 ^ t33
t35 = t27 ^ t33
t36 = t24 & t35
t37 = t36 ^ t34
t38 = t27 ^ t36
t39 = t29 & t38
t40 = t25 ^ t39
t41 = t40 ^ t37
t42 = t29 ^ t33
t43 = t29 ^ t40
t44 = t33 ^ t37
t45 = t42 ^ t41
z0 = t44 & y15
z1 = t37 & y6
z2 = t33 & U7
z3 = t43 & y16
z4 = t40 & y1
z5 = t29 & y7
z6 = t42 & y11
z7 = t45 & y17
z8 = t41 & y10
z9 = t44 & y12
z10 = t37 & y3
z11 = t33 & y4
z12 = t43 & y13
z13 = t40 & y5
z14 = t29 & y2
z15 = t42 & y9
z16 = t45 & y14
z17 = t41 & y8
t46 = z15 ^ z16
t47 = z10 ^ z11
t48 = z5 ^ z13
t49 = z9 ^ z10
t50 = z2 ^ z12
t51 = z2 ^ z5
t52 = z7 ^ z8
t53 = z0 ^ z3
t54 = z6 ^ z7
t55 = z16 ^ z17
t56 = z12 ^ t48
t57 = t50 ^ t53
t58 = z4 ^ t46
t59 = z3 ^ t54
t60 = t46 ^ t57
t61 = z14 ^ t57
t62 = t52 ^ t58
t63 = t49 ^ t58
t64 = z4 ^ t59
t65 = t61 ^ t62
t66 = z1 ^ t63
S0 = t59 ^ t63
S6 = t56 ~ t62
S7 = t48 ~ t60
t67 = t64 ^ t65
S3 = t53 ^ t66
S4 = t51 ^ t66
S5 = t47 ^ t65
S1 = t64 ~ S3
S2 = t55 ~ t67
"""

SBOX_OPS = [
    (out.strip(), expr.split()) for out, expr in (l.split("=") for l in SBOX_TOP.strip().splitlines())
]


class Builder:
    def __init__(self, n_inputs):
        self.next = n_inputs
        self.gates = []

    def gate(self, op, *ins):
        out = self.next
        self.next += 1
        self.gates.append((op, ins, out))
        return out

    def xor(self, a, b):
        return self.gate("XOR", a, b)

    def and_(self, a, b):
        return self.gate("AND", a, b)

    def inv(self, a):
        return self.gate("INV", a)

    def sbox(self, byte):
        """byte: 8 wires, LSB first."""
        env = {f"U{i}": byte[7 - i] for i in range(8)}
        for out, (a, op, b) in SBOX_OPS:
            x, y = env[a], env[b]
            if op == "^":
                env[out] = self.xor(x, y)
            elif op == "&":
                env[out] = self.and_(x, y)
            else:
                env[out] = self.inv(self.xor(x, y))
        return [env[f"S{7 - i}"] for i in range(8)]

    def xor_bytes(self, a, b):
        return [self.xor(x, y) for x, y in zip(a, b)]

    def xtime(self, b):
        return [b[7], self.xor(b[0], b[7]), b[1], self.xor(b[2], b[7]), self.xor(b[3], b[7]), b[4], b[5], b[6]]


RCON = [0x01, 0x02, 0x04, 0x08, 0x10, 0x20, 0x40, 0x80, 0x1B, 0x36]


def build():
    bld = Builder(256)
    key = [[8 * j + k for k in range(8)] for j in range(16)]
    state = [[128 + 8 * j + k for k in range(8)] for j in range(16)]

    words = [key[4 * i : 4 * i + 4] for i in range(4)]
    for r in range(10):
        last = words[-1]
        t = [bld.sbox(b) for b in last[1:] + last[:1]]
        t[0] = [bld.inv(w) if (RCON[r] >> k) & 1 else w for k, w in enumerate(t[0])]
        for i in range(4):
            prev = t if i == 0 else words[-1]
            words.append([bld.xor_bytes(p, q) for p, q in zip(words[-4], prev)])
    round_keys = [sum(words[4 * r : 4 * r + 4], []) for r in range(11)]

    state = [bld.xor_bytes(s, k) for s, k in zip(state, round_keys[0])]
    for r in range(1, 11):
        state = [bld.sbox(b) for b in state]
        # Column-major state: byte index 4c + row.
        state = [state[(4 * (c + row) + row) % 16] for c in range(4) for row in range(4)]
        if r < 10:
            mixed = []
            for c in range(4):
                col = state[4 * c : 4 * c + 4]
                all_ = bld.xor_bytes(bld.xor_bytes(col[0], col[1]), bld.xor_bytes(col[2], col[3]))
                for row in range(4):
                    nxt = col[(row + 1) % 4]
                    x = bld.xtime(bld.xor_bytes(col[row], nxt))
                    mixed.append(bld.xor_bytes(bld.xor_bytes(col[row], all_), x))
            state = mixed
        state = [bld.xor_bytes(s, k) for s, k in zip(state, round_keys[r])]

    outs = [bld.gate("EQW", w) for b in state for w in b]
    return bld, outs


def main(path):
    bld, _ = build()
    lines = [f"{len(bld.gates)} {bld.next}", "2 128 128", "1 128", ""]
    for op, ins, out in bld.gates:
        lines.append(f"{len(ins)} 1 {' '.join(map(str, ins))} {out} {op}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "aes_128.txt")
