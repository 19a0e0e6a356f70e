from fbin_link.qstate import BinPair, FBinQubit, jitter_visibility

pair = BinPair.from_spacing(2.4e15, "1.634e9")
q = FBinQubit.plus(pair)
q.a0 = 0.5
jitter_visibility(0.95, 1.634e9, 93e-12, convention="fwhm")
