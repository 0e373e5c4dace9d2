//! Regenerates the synthetic sample inputs shipped under data/.
//!
//! The files are realistically shaped stand-ins for a pmu-tools event
//! dump and a uops.info instruction database, sized to the reference
//! device: 214 catalog events plus a 3-event augment file (217 total, 20
//! speculative-counted), and 14546 instruction records of which the
//! shipped validity filter keeps 3069.
//!
//! Usage: gen_samples [OUTPUT_DIR]   (default: data/)

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::PathBuf;

use pmuspill_core::isa::normalize_mnemonic;
use pmuspill_core::rng::SplitMix64;

const TOTAL_INSTRUCTIONS: usize = 14546;
const VALID_INSTRUCTIONS: usize = 3069;
const BASE_EVENTS: usize = 214;
const AUGMENT_EVENTS: usize = 3;
const VULNERABLE_EVENTS: usize = 20;

struct Bucket {
    extension: &'static str,
    valid: bool,
    stems: Vec<String>,
    forms: Vec<String>,
    want: usize,
}

impl Bucket {
    fn capacity(&self) -> usize {
        self.stems.len() * self.forms.len()
    }

    fn emit(&self) -> Vec<String> {
        assert!(
            self.want <= self.capacity(),
            "bucket {} wants {} > capacity {}",
            self.extension,
            self.want,
            self.capacity()
        );
        let mut out = Vec::with_capacity(self.want);
        'outer: for stem in &self.stems {
            for form in &self.forms {
                if out.len() == self.want {
                    break 'outer;
                }
                if form.is_empty() {
                    out.push(stem.clone());
                } else {
                    out.push(format!("{stem} ({form})"));
                }
            }
        }
        out
    }
}

fn strs(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn gp_forms() -> Vec<String> {
    strs(&[
        "R64, R64", "R32, R32", "R16, R16", "R8, R8", "R64, M64", "M64, R64", "R64, I32",
        "R32, I32", "M64, I32", "R32, M32",
    ])
}

fn avx_forms() -> Vec<String> {
    strs(&[
        "XMM, XMM, XMM", "YMM, YMM, YMM", "XMM, XMM, M128", "YMM, YMM, M256", "XMM, XMM, XMM, I8",
        "YMM, YMM, YMM, I8", "XMM, M128", "YMM, M256",
    ])
}

fn evex_forms(width: &str, mem: &str, bcst: &str) -> Vec<String> {
    let mut forms = Vec::new();
    for mask in ["", "{K}", "{K}{Z}"] {
        forms.push(format!("{width}{mask}, {width}, {width}"));
        forms.push(format!("{width}{mask}, {width}, {mem}"));
        forms.push(format!("{width}{mask}, {width}, {bcst}"));
        forms.push(format!("{width}{mask}, {width}, {width}, I8"));
        forms.push(format!("{width}{mask}, {mem}"));
        forms.push(format!("K{mask}, {width}, {width}"));
    }
    forms
}

fn vector_stems() -> Vec<String> {
    // Shared vector stem vocabulary for the EVEX families.
    let mut stems = Vec::new();
    for op in [
        "VADD", "VSUB", "VMUL", "VDIV", "VMAX", "VMIN", "VSQRT", "VRCP14", "VRSQRT14",
        "VGETEXP", "VGETMANT", "VREDUCE", "VRNDSCALE", "VSCALEF", "VRANGE", "VFIXUPIMM",
    ] {
        for ty in ["PS", "PD", "SS", "SD"] {
            stems.push(format!("{op}{ty}"));
        }
    }
    for op in [
        "VPADD", "VPSUB", "VPMULL", "VPMAXS", "VPMAXU", "VPMINS", "VPMINU", "VPABS", "VPCMPEQ",
        "VPCMPGT", "VPSLL", "VPSRL", "VPSRA", "VPROL", "VPROR",
    ] {
        for ty in ["D", "Q"] {
            stems.push(format!("{op}{ty}"));
        }
    }
    stems.extend(strs(&[
        "VPANDD", "VPANDQ", "VPORD", "VPORQ", "VPXORD", "VPXORQ", "VPANDND", "VPANDNQ",
        "VPERMD", "VPERMQ", "VPERMPS", "VPERMPD", "VPERMI2D", "VPERMI2Q", "VPERMT2D", "VPERMT2Q",
        "VPCOMPRESSD", "VPCOMPRESSQ", "VCOMPRESSPS", "VCOMPRESSPD", "VPEXPANDD", "VPEXPANDQ",
        "VEXPANDPS", "VEXPANDPD", "VPTERNLOGD", "VPTERNLOGQ", "VBLENDMPS", "VBLENDMPD",
        "VPBLENDMD", "VPBLENDMQ", "VPTESTMD", "VPTESTMQ", "VPTESTNMD", "VPTESTNMQ",
        "VBROADCASTSS", "VBROADCASTSD", "VPBROADCASTD", "VPBROADCASTQ", "VSHUFPS", "VSHUFPD",
        "VPSHUFD", "VUNPCKLPS", "VUNPCKHPS", "VUNPCKLPD", "VUNPCKHPD", "VPUNPCKLDQ",
        "VPUNPCKHDQ", "VPUNPCKLQDQ", "VPUNPCKHQDQ", "VCVTDQ2PS", "VCVTPS2DQ", "VCVTDQ2PD",
        "VCVTPD2DQ", "VCVTUDQ2PS", "VCVTPS2UDQ", "VMOVAPS64", "VMOVAPD64", "VMOVDQA32",
        "VMOVDQA64", "VMOVDQU32", "VMOVDQU64", "VMOVNTPS512", "VMOVNTDQ512", "VALIGND",
        "VALIGNQ", "VPSLLVD", "VPSLLVQ", "VPSRLVD", "VPSRLVQ", "VPSRAVD", "VPSRAVQ",
        "VPCONFLICTD", "VPCONFLICTQ", "VPLZCNTD", "VPLZCNTQ", "VEXTRACTF32X4", "VEXTRACTI32X4",
        "VINSERTF32X4", "VINSERTI32X4", "VSHUFF32X4", "VSHUFI32X4", "VPMOVDB", "VPMOVDW",
        "VPMOVQD", "VPMOVSDB", "VPMOVUSDB", "VGATHERDPS512", "VGATHERQPS512", "VSCATTERDPS",
        "VSCATTERQPS", "VPGATHERDD512", "VPSCATTERDD", "VPSCATTERQQ",
    ]));
    stems
}

fn instruction_buckets() -> Vec<Bucket> {
    let mut buckets = Vec::new();

    // ---- valid on the modeled device ----
    buckets.push(Bucket {
        extension: "BASE",
        valid: true,
        stems: strs(&[
            "ADD", "ADC", "SUB", "SBB", "AND", "OR", "XOR", "CMP", "TEST", "MOV", "MOVSX",
            "MOVZX", "LEA", "INC", "DEC", "NEG", "NOT", "SHL", "SHR", "SAR", "ROL", "ROR",
            "RCL", "RCR", "BT", "BTS", "BTR", "BTC", "BSF", "BSR", "XCHG", "XADD", "CMOVO",
            "CMOVNO", "CMOVB", "CMOVAE", "CMOVZ", "CMOVNZ", "CMOVBE", "CMOVA", "CMOVS",
            "CMOVNS", "CMOVP", "CMOVNP", "CMOVL", "CMOVGE", "CMOVLE", "CMOVG", "SETO",
            "SETNO", "SETB", "SETAE", "SETZ", "SETNZ", "SETBE", "SETA", "SETS", "SETNS",
            "SETP", "SETNP", "SETL", "SETGE", "SETLE", "SETG", "PUSH", "POP", "IMUL", "MUL",
            "DIV", "IDIV", "CQO", "CDQ", "CBW", "CWDE", "CDQE", "CMPXCHG", "NOP",
        ]),
        forms: gp_forms(),
        want: 0, // elastic, fixed below
    });
    buckets.push(Bucket {
        extension: "X87",
        valid: true,
        stems: strs(&[
            "FLD", "FST", "FSTP", "FADD", "FADDP", "FSUB", "FSUBP", "FSUBR", "FMUL", "FMULP",
            "FDIV", "FDIVP", "FDIVR", "FCHS", "FABS", "FSQRT", "FSIN", "FCOS", "FPTAN",
            "FPATAN", "FXCH", "FCOM", "FCOMP", "FCOMPP", "FUCOM", "FUCOMI", "FICOM", "FILD",
            "FIST", "FISTP", "FRNDINT", "FSCALE", "FXAM", "FLDZ", "FLD1",
        ]),
        forms: strs(&["ST0, ST", "ST, ST0", "M64", "M32"]),
        want: 140,
    });
    buckets.push(Bucket {
        extension: "MMX",
        valid: true,
        stems: strs(&[
            "PADDB", "PADDW", "PADDD", "PSUBB", "PSUBW", "PSUBD", "PMULLW", "PMULHW",
            "PMADDWD", "PAND", "PANDN", "POR", "PXOR", "PCMPEQB", "PCMPEQW", "PCMPEQD",
            "PCMPGTB", "PCMPGTW", "PCMPGTD", "PUNPCKLBW", "PUNPCKLWD", "PUNPCKLDQ",
            "PUNPCKHBW", "PUNPCKHWD", "PUNPCKHDQ", "PACKSSWB", "PACKSSDW", "PACKUSWB",
            "PSLLW", "PSLLD", "PSLLQ", "PSRLW", "PSRLD",
        ]),
        forms: strs(&["MM, MM", "MM, M64", "MM, I8"]),
        want: 90,
    });
    buckets.push(Bucket {
        extension: "SSE",
        valid: true,
        stems: strs(&[
            "ADDPS", "SUBPS", "MULPS", "DIVPS", "SQRTPS", "MAXPS", "MINPS", "RCPPS",
            "RSQRTPS", "ANDPS", "ANDNPS", "ORPS", "XORPS", "CMPPS", "SHUFPS", "UNPCKLPS",
            "UNPCKHPS", "MOVAPS", "MOVUPS", "MOVHPS", "MOVLPS", "MOVMSKPS", "MOVSS", "ADDSS",
            "SUBSS", "MULSS", "DIVSS", "SQRTSS", "MAXSS", "MINSS", "COMISS", "UCOMISS",
            "CVTSI2SS", "CVTSS2SI", "CVTTSS2SI", "PREFETCHT0", "PREFETCHT1", "PREFETCHNTA",
        ]),
        forms: strs(&["XMM, XMM", "XMM, M128", "XMM, M32", "XMM, R64"]),
        want: 150,
    });
    buckets.push(Bucket {
        extension: "SSE2",
        valid: true,
        stems: strs(&[
            "ADDPD", "SUBPD", "MULPD", "DIVPD", "SQRTPD", "MAXPD", "MINPD", "ANDPD", "ANDNPD",
            "ORPD", "XORPD", "CMPPD", "SHUFPD", "UNPCKLPD", "UNPCKHPD", "MOVAPD", "MOVUPD",
            "MOVSD_X", "ADDSD", "SUBSD", "MULSD", "DIVSD", "SQRTSD", "MAXSD", "MINSD",
            "COMISD", "UCOMISD", "CVTSI2SD", "CVTSD2SI", "CVTTSD2SI", "CVTPS2PD", "CVTPD2PS",
            "CVTDQ2PS_X", "CVTPS2DQ_X", "MOVD", "MOVQ", "MOVDQA", "MOVDQU", "PADDQ", "PSUBQ",
            "PMULUDQ", "PSHUFD", "PSHUFHW", "PSHUFLW", "PSLLDQ", "PSRLDQ", "PSRAD", "PSRAW_X",
            "PMOVMSKB", "PEXTRW", "PINSRW", "MASKMOVDQU", "MOVNTDQ", "MOVNTPD", "MOVNTI",
            "LFENCE", "MFENCE", "CLFLUSH", "PAUSE", "PACKSSDW_X", "PUNPCKLQDQ", "PUNPCKHQDQ",
            "PCMPEQQ_X", "PAVGB", "PAVGW", "PMAXUB", "PMINUB", "PMAXSW", "PMINSW", "PSADBW",
            "PMULHUW", "PADDSB", "PADDSW", "PADDUSB", "PADDUSW", "PSUBSB", "PSUBSW",
            "PSUBUSB", "PSUBUSW",
        ]),
        forms: strs(&["XMM, XMM", "XMM, M128", "XMM, I8", "XMM, R32", "M128, XMM", "XMM, M64"]),
        want: 420,
    });
    buckets.push(Bucket {
        extension: "SSE3",
        valid: true,
        stems: strs(&[
            "ADDSUBPS", "ADDSUBPD", "HADDPS", "HADDPD", "HSUBPS", "HSUBPD", "MOVSHDUP",
            "MOVSLDUP", "MOVDDUP", "LDDQU",
        ]),
        forms: strs(&["XMM, XMM", "XMM, M128"]),
        want: 20,
    });
    buckets.push(Bucket {
        extension: "SSSE3",
        valid: true,
        stems: strs(&[
            "PSHUFB", "PHADDW", "PHADDD", "PHADDSW", "PHSUBW", "PHSUBD", "PHSUBSW",
            "PMADDUBSW", "PMULHRSW", "PSIGNB", "PSIGNW", "PSIGND", "PALIGNR", "PABSB",
            "PABSW", "PABSD",
        ]),
        forms: strs(&["XMM, XMM", "XMM, M128", "MM, MM"]),
        want: 45,
    });
    buckets.push(Bucket {
        extension: "SSE4_1",
        valid: true,
        stems: strs(&[
            "PMULLD", "PMULDQ", "PMINSB", "PMINSD", "PMINUW", "PMINUD", "PMAXSB", "PMAXSD",
            "PMAXUW", "PMAXUD", "DPPS", "DPPD", "BLENDPS", "BLENDPD", "BLENDVPS", "BLENDVPD",
            "PBLENDW", "PBLENDVB", "ROUNDPS", "ROUNDPD", "ROUNDSS", "ROUNDSD", "INSERTPS",
            "EXTRACTPS", "PINSRB", "PINSRD", "PINSRQ", "PEXTRB", "PEXTRD", "PEXTRQ",
            "PMOVSXBW", "PMOVSXBD", "PMOVSXWD", "PMOVSXDQ", "PMOVZXBW", "PMOVZXBD",
            "PMOVZXWD", "PMOVZXDQ", "PTEST", "PACKUSDW", "MPSADBW", "PHMINPOSUW", "MOVNTDQA",
            "PCMPEQQ",
        ]),
        forms: strs(&["XMM, XMM", "XMM, M128", "XMM, XMM, I8", "XMM, R32"]),
        want: 150,
    });
    buckets.push(Bucket {
        extension: "SSE4_2",
        valid: true,
        stems: strs(&["PCMPESTRI", "PCMPESTRM", "PCMPISTRI", "PCMPISTRM", "PCMPGTQ", "CRC32"]),
        forms: strs(&["XMM, XMM, I8", "XMM, M128, I8", "R32, R32", "R64, M64"]),
        want: 20,
    });
    buckets.push(Bucket {
        extension: "AVX",
        valid: true,
        stems: strs(&[
            "VADDPS_V", "VADDPD_V", "VSUBPS_V", "VSUBPD_V", "VMULPS_V", "VMULPD_V", "VDIVPS_V",
            "VDIVPD_V", "VSQRTPS_V", "VSQRTPD_V", "VMAXPS_V", "VMAXPD_V", "VMINPS_V",
            "VMINPD_V", "VANDPS_V", "VANDPD_V", "VANDNPS_V", "VANDNPD_V", "VORPS_V", "VORPD_V",
            "VXORPS_V", "VXORPD_V", "VCMPPS_V", "VCMPPD_V", "VSHUFPS_V", "VSHUFPD_V",
            "VUNPCKLPS_V", "VUNPCKHPS_V", "VUNPCKLPD_V", "VUNPCKHPD_V", "VMOVAPS_V",
            "VMOVUPS_V", "VMOVAPD_V", "VMOVUPD_V", "VBLENDPS_V", "VBLENDPD_V", "VBLENDVPS_V",
            "VBLENDVPD_V", "VDPPS_V", "VROUNDPS_V", "VROUNDPD_V", "VRCPPS_V", "VRSQRTPS_V",
            "VADDSS_V", "VADDSD_V", "VSUBSS_V", "VSUBSD_V", "VMULSS_V", "VMULSD_V", "VDIVSS_V",
            "VDIVSD_V", "VSQRTSS_V", "VSQRTSD_V", "VCVTPS2PD_V", "VCVTPD2PS_V", "VCVTDQ2PS_V",
            "VCVTPS2DQ_V", "VCVTSI2SS_V", "VCVTSI2SD_V", "VMOVMSKPS_V", "VMOVMSKPD_V",
            "VPERMILPS_V", "VPERMILPD_V", "VPERM2F128_V", "VBROADCASTSS_V", "VBROADCASTSD_V",
            "VBROADCASTF128_V", "VEXTRACTF128_V", "VINSERTF128_V", "VMASKMOVPS_V",
            "VMASKMOVPD_V", "VTESTPS_V", "VTESTPD_V", "VZEROUPPER", "VZEROALL", "VLDDQU_V",
            "VMOVSHDUP_V", "VMOVSLDUP_V", "VMOVDDUP_V", "VHADDPS_V",
        ]),
        forms: avx_forms(),
        want: 620,
    });
    buckets.push(Bucket {
        extension: "AVX2",
        valid: true,
        stems: strs(&[
            "VPADDB_V", "VPADDW_V", "VPADDD_V", "VPADDQ_V", "VPSUBB_V", "VPSUBW_V", "VPSUBD_V",
            "VPSUBQ_V", "VPMULLW_V", "VPMULLD_V", "VPMULHW_V", "VPMULHUW_V", "VPMULUDQ_V",
            "VPMULDQ_V", "VPMADDWD_V", "VPMADDUBSW_V", "VPAND_V", "VPANDN_V", "VPOR_V",
            "VPXOR_V", "VPCMPEQB_V", "VPCMPEQW_V", "VPCMPEQD_V", "VPCMPEQQ_V", "VPCMPGTB_V",
            "VPCMPGTW_V", "VPCMPGTD_V", "VPCMPGTQ_V", "VPMAXSB_V", "VPMAXSW_V", "VPMAXSD_V",
            "VPMAXUB_V", "VPMAXUW_V", "VPMAXUD_V", "VPMINSB_V", "VPMINSW_V", "VPMINSD_V",
            "VPMINUB_V", "VPMINUW_V", "VPMINUD_V", "VPABSB_V", "VPABSW_V", "VPABSD_V",
            "VPSLLW_V", "VPSLLD_V", "VPSLLQ_V", "VPSRLW_V", "VPSRLD_V", "VPSRLQ_V", "VPSRAW_V",
            "VPSRAD_V", "VPSLLVD_V", "VPSLLVQ_V", "VPSRLVD_V", "VPSRLVQ_V", "VPSRAVD_V",
            "VPSHUFB_V", "VPSHUFD_V", "VPSHUFHW_V", "VPSHUFLW_V", "VPALIGNR_V", "VPBLENDW_V",
            "VPBLENDVB_V", "VPBLENDD_V", "VPERMD_V", "VPERMQ_V", "VPERMPS_V", "VPERMPD_V",
            "VPERM2I128_V", "VPBROADCASTB_V", "VPBROADCASTW_V", "VPBROADCASTD_V",
            "VPBROADCASTQ_V", "VBROADCASTI128_V", "VEXTRACTI128_V", "VINSERTI128_V",
            "VPMASKMOVD_V", "VPMASKMOVQ_V", "VGATHERDPS_V", "VGATHERQPS_V", "VGATHERDPD_V",
            "VGATHERQPD_V", "VPGATHERDD_V", "VPGATHERQD_V", "VPGATHERDQ_V", "VPGATHERQQ_V",
            "VPMOVSXBW_V", "VPMOVSXBD_V", "VPMOVSXWD_V", "VPMOVSXDQ_V", "VPMOVZXBW_V",
            "VPMOVZXBD_V", "VPMOVZXWD_V", "VPMOVZXDQ_V", "VPSADBW_V", "VMPSADBW_V",
            "VPACKSSWB_V", "VPACKSSDW_V", "VPACKUSWB_V", "VPACKUSDW_V",
        ]),
        forms: avx_forms(),
        want: 480,
    });
    buckets.push(Bucket {
        extension: "FMA",
        valid: true,
        stems: {
            let mut v = Vec::new();
            for op in ["VFMADD", "VFMSUB", "VFNMADD", "VFNMSUB"] {
                for ord in ["132", "213", "231"] {
                    for ty in ["PS", "PD", "SS"] {
                        v.push(format!("{op}{ord}{ty}"));
                    }
                }
            }
            v
        },
        forms: strs(&["XMM, XMM, XMM", "YMM, YMM, YMM", "XMM, XMM, M128"]),
        want: 96,
    });
    buckets.push(Bucket {
        extension: "BMI1",
        valid: true,
        stems: strs(&["ANDN", "BEXTR", "BLSI", "BLSMSK", "BLSR", "TZCNT"]),
        forms: strs(&["R32, R32", "R64, R64", "R64, M64"]),
        want: 18,
    });
    buckets.push(Bucket {
        extension: "BMI2",
        valid: true,
        stems: strs(&["BZHI", "MULX", "PDEP", "PEXT", "RORX", "SARX", "SHLX", "SHRX"]),
        forms: strs(&["R64, R64, R64", "R32, R32, R32"]),
        want: 16,
    });
    buckets.push(Bucket {
        extension: "AES",
        valid: true,
        stems: strs(&["AESDEC", "AESDECLAST", "AESENC", "AESENCLAST", "AESIMC", "AESKEYGENASSIST"]),
        forms: strs(&["XMM, XMM", "XMM, M128"]),
        want: 12,
    });
    buckets.push(Bucket {
        extension: "PCLMULQDQ",
        valid: true,
        stems: strs(&["PCLMULQDQ"]),
        forms: strs(&["XMM, XMM, I8", "XMM, M128, I8"]),
        want: 2,
    });
    buckets.push(Bucket {
        extension: "F16C",
        valid: true,
        stems: strs(&["VCVTPH2PS", "VCVTPS2PH"]),
        forms: strs(&["XMM, XMM", "YMM, XMM", "XMM, M64", "M128, YMM, I8"]),
        want: 8,
    });
    buckets.push(Bucket {
        extension: "ADX",
        valid: true,
        stems: strs(&["ADCX", "ADOX"]),
        forms: strs(&["R32, R32", "R64, R64", "R64, M64"]),
        want: 6,
    });
    buckets.push(Bucket {
        extension: "ABM",
        valid: true,
        stems: strs(&["POPCNT", "LZCNT"]),
        forms: strs(&["R16, R16", "R32, R32", "R64, R64"]),
        want: 6,
    });
    buckets.push(Bucket {
        extension: "MOVBE",
        valid: true,
        stems: strs(&["MOVBE"]),
        forms: strs(&["R16, M16", "R32, M32", "R64, M64", "M16, R16", "M32, R32", "M64, R64"]),
        want: 6,
    });
    buckets.push(Bucket {
        extension: "RDRAND",
        valid: true,
        stems: strs(&["RDRAND"]),
        forms: strs(&["R16", "R32", "R64"]),
        want: 3,
    });
    buckets.push(Bucket {
        extension: "RDSEED",
        valid: true,
        stems: strs(&["RDSEED"]),
        forms: strs(&["R16", "R32", "R64"]),
        want: 3,
    });
    buckets.push(Bucket {
        extension: "XSAVE",
        valid: true,
        stems: strs(&["XSAVE", "XSAVEOPT", "XSAVEC", "XRSTOR", "XGETBV", "XSETBV_U"]),
        forms: strs(&["M4096", ""]),
        want: 6,
    });
    buckets.push(Bucket {
        extension: "CLFLUSHOPT",
        valid: true,
        stems: strs(&["CLFLUSHOPT"]),
        forms: strs(&["M8"]),
        want: 1,
    });
    buckets.push(Bucket {
        extension: "RTM",
        valid: true,
        stems: strs(&["XBEGIN", "XEND", "XABORT", "XTEST"]),
        forms: strs(&[""]),
        want: 4,
    });
    buckets.push(Bucket {
        extension: "PRFCHW",
        valid: true,
        stems: strs(&["PREFETCHW"]),
        forms: strs(&["M8"]),
        want: 1,
    });

    // ---- rejected by the validity screen on the modeled device ----
    let vstems = vector_stems();
    buckets.push(Bucket {
        extension: "AVX512F",
        valid: false,
        stems: vstems.clone(),
        forms: evex_forms("ZMM", "M512", "BCST64"),
        want: 0, // elastic, fixed below
    });
    buckets.push(Bucket {
        extension: "AVX512VL",
        valid: false,
        stems: vstems.clone(),
        forms: {
            let mut f = evex_forms("XMM", "M128", "BCST32");
            f.extend(evex_forms("YMM", "M256", "BCST32"));
            f
        },
        want: 5100,
    });
    buckets.push(Bucket {
        extension: "AVX512BW",
        valid: false,
        stems: strs(&[
            "VPADDB_Z", "VPADDW_Z", "VPADDSB_Z", "VPADDSW_Z", "VPADDUSB_Z", "VPADDUSW_Z",
            "VPSUBB_Z", "VPSUBW_Z", "VPSUBSB_Z", "VPSUBSW_Z", "VPSUBUSB_Z", "VPSUBUSW_Z",
            "VPAVGB_Z", "VPAVGW_Z", "VPMAXSB_Z", "VPMAXSW_Z", "VPMAXUB_Z", "VPMAXUW_Z",
            "VPMINSB_Z", "VPMINSW_Z", "VPMINUB_Z", "VPMINUW_Z", "VPMULHW_Z", "VPMULHUW_Z",
            "VPMULLW_Z", "VPMULHRSW_Z", "VPMADDWD_Z", "VPMADDUBSW_Z", "VPACKSSWB_Z",
            "VPACKSSDW_Z", "VPACKUSWB_Z", "VPACKUSDW_Z", "VPUNPCKLBW_Z", "VPUNPCKHBW_Z",
            "VPUNPCKLWD_Z", "VPUNPCKHWD_Z", "VPSHUFB_Z", "VPSHUFHW_Z", "VPSHUFLW_Z",
            "VPSLLW_Z", "VPSRLW_Z", "VPSRAW_Z", "VPCMPEQB_Z", "VPCMPEQW_Z", "VPCMPGTB_Z",
            "VPCMPGTW_Z", "VPABSB_Z", "VPABSW_Z", "VPSADBW_Z", "VDBPSADBW", "VPBLENDMB",
            "VPBLENDMW", "VPERMW", "VPERMI2W", "VPERMT2W", "VPTESTMB", "VPTESTMW",
            "VPTESTNMB", "VPTESTNMW", "VPMOVWB", "VPMOVSWB", "VPMOVUSWB", "VPSLLVW",
            "VPSRLVW", "VPSRAVW", "VPBROADCASTB_Z", "VPBROADCASTW_Z",
        ]),
        forms: evex_forms("ZMM", "M512", "BCST32"),
        want: 980,
    });
    buckets.push(Bucket {
        extension: "AVX512DQ",
        valid: false,
        stems: strs(&[
            "VCVTTPD2UQQ", "VCVTTPS2UQQ", "VCVTPS2QQ", "VCVTPD2QQ", "VCVTQQ2PS", "VCVTQQ2PD",
            "VCVTUQQ2PS", "VCVTUQQ2PD", "VCVTTPD2QQ", "VCVTTPS2QQ", "VFPCLASSSS", "VFPCLASSSD",
            "VPMOVQ2M", "VCVTUDQ2PD", "VFPCLASSPS", "VFPCLASSPD", "VEXTRACTF64X2",
            "VEXTRACTI64X2", "VINSERTF64X2", "VINSERTI64X2", "VBROADCASTF32X2",
            "VBROADCASTI32X2", "VPMOVM2D", "VPMOVM2Q", "VPMOVD2M",
        ]),
        forms: evex_forms("ZMM", "M512", "BCST64"),
        want: 400,
    });
    buckets.push(Bucket {
        extension: "AVX512_FP16",
        valid: false,
        stems: {
            let mut v = Vec::new();
            for op in [
                "VADDPH", "VSUBPH", "VMULPH", "VDIVPH", "VMAXPH", "VMINPH", "VSQRTPH",
                "VRCPPH", "VRSQRTPH", "VGETEXPPH", "VGETMANTPH", "VREDUCEPH", "VRNDSCALEPH",
                "VSCALEFPH", "VFMADD132PH", "VFMADD213PH", "VFMADD231PH", "VFMSUB132PH",
                "VFMSUB213PH", "VFMSUB231PH", "VFNMADD132PH", "VFNMADD213PH", "VFNMADD231PH",
                "VCVTPH2PSX", "VCVTPS2PHX", "VCVTPH2W", "VCVTW2PH", "VCVTPH2DQ", "VCVTDQ2PH",
                "VCMPPH", "VCOMISH", "VADDSH", "VSUBSH", "VMULSH", "VDIVSH", "VMAXSH",
                "VMINSH", "VSQRTSH", "VFMADD132SH", "VFMADD213SH",
            ] {
                v.push(op.to_string());
            }
            v
        },
        forms: evex_forms("ZMM", "M512", "BCST32"),
        want: 640,
    });
    buckets.push(Bucket {
        extension: "AVX512CD",
        valid: false,
        stems: strs(&["VPCONFLICTD_C", "VPCONFLICTQ_C", "VPLZCNTD_C", "VPLZCNTQ_C", "VPBROADCASTMB2Q", "VPBROADCASTMW2D"]),
        forms: evex_forms("ZMM", "M512", "BCST64"),
        want: 96,
    });
    buckets.push(Bucket {
        extension: "AVX512_IFMA",
        valid: false,
        stems: strs(&["VPMADD52LUQ", "VPMADD52HUQ"]),
        forms: evex_forms("ZMM", "M512", "BCST64"),
        want: 24,
    });
    buckets.push(Bucket {
        extension: "AVX512_VBMI",
        valid: false,
        stems: strs(&["VPERMB", "VPERMI2B", "VPERMT2B", "VPMULTISHIFTQB"]),
        forms: evex_forms("ZMM", "M512", "BCST64"),
        want: 48,
    });
    buckets.push(Bucket {
        extension: "AVX512_VBMI2",
        valid: false,
        stems: strs(&[
            "VPCOMPRESSB", "VPCOMPRESSW", "VPEXPANDB", "VPEXPANDW", "VPSHLDW", "VPSHLDD",
            "VPSHLDQ", "VPSHRDW", "VPSHRDD", "VPSHRDQ",
        ]),
        forms: evex_forms("ZMM", "M512", "BCST64"),
        want: 96,
    });
    buckets.push(Bucket {
        extension: "AVX512_VNNI",
        valid: false,
        stems: strs(&["VPDPBUSD", "VPDPBUSDS", "VPDPWSSD", "VPDPWSSDS"]),
        forms: evex_forms("ZMM", "M512", "BCST32"),
        want: 48,
    });
    buckets.push(Bucket {
        extension: "AVX512_BITALG",
        valid: false,
        stems: strs(&["VPOPCNTB", "VPOPCNTW", "VPSHUFBITQMB"]),
        forms: evex_forms("ZMM", "M512", "BCST64"),
        want: 36,
    });
    buckets.push(Bucket {
        extension: "AVX512_VPOPCNTDQ",
        valid: false,
        stems: strs(&["VPOPCNTD", "VPOPCNTQ"]),
        forms: evex_forms("ZMM", "M512", "BCST64"),
        want: 24,
    });
    buckets.push(Bucket {
        extension: "AVX512_BF16",
        valid: false,
        stems: strs(&["VCVTNE2PS2BF16", "VCVTNEPS2BF16", "VDPBF16PS"]),
        forms: evex_forms("ZMM", "M512", "BCST32"),
        want: 36,
    });
    buckets.push(Bucket {
        extension: "AVX512ER",
        valid: false,
        stems: strs(&["VEXP2PS", "VEXP2PD", "VRCP28PS", "VRCP28PD", "VRSQRT28PS", "VRSQRT28PD"]),
        forms: strs(&["ZMM, ZMM", "ZMM{K}, ZMM", "ZMM{K}{Z}, ZMM", "ZMM, M512", "ZMM{K}, M512", "ZMM, BCST64", "ZMM{K}, BCST64", "ZMM{K}{Z}, M512"]),
        want: 48,
    });
    buckets.push(Bucket {
        extension: "AVX512PF",
        valid: false,
        stems: strs(&[
            "VGATHERPF0DPS", "VGATHERPF0QPS", "VGATHERPF1DPS", "VGATHERPF1QPS",
            "VSCATTERPF0DPS", "VSCATTERPF0QPS", "VSCATTERPF1DPS", "VSCATTERPF1QPS",
        ]),
        forms: strs(&["VM32Z{K}", "VM64Z{K}", "VM32Z", "VM64Z"]),
        want: 32,
    });
    buckets.push(Bucket {
        extension: "AMX_TILE",
        valid: false,
        stems: strs(&["LDTILECFG", "STTILECFG", "TILELOADD", "TILELOADDT1", "TILESTORED", "TILERELEASE", "TILEZERO"]),
        forms: strs(&["TMM, SIBMEM", "SIBMEM, TMM"]),
        want: 12,
    });
    buckets.push(Bucket {
        extension: "AMX_INT8",
        valid: false,
        stems: strs(&["TDPBSSD", "TDPBSUD", "TDPBUSD", "TDPBUUD"]),
        forms: strs(&["TMM, TMM, TMM"]),
        want: 4,
    });
    buckets.push(Bucket {
        extension: "AMX_BF16",
        valid: false,
        stems: strs(&["TDPBF16PS"]),
        forms: strs(&["TMM, TMM, TMM"]),
        want: 1,
    });
    buckets.push(Bucket {
        extension: "SHA",
        valid: false,
        stems: strs(&["SHA1RNDS4", "SHA1NEXTE", "SHA1MSG1", "SHA1MSG2", "SHA256RNDS2", "SHA256MSG1", "SHA256MSG2"]),
        forms: strs(&["XMM, XMM", "XMM, M128"]),
        want: 14,
    });
    buckets.push(Bucket {
        extension: "GFNI",
        valid: false,
        stems: strs(&["GF2P8AFFINEQB", "GF2P8AFFINEINVQB", "GF2P8MULB"]),
        forms: strs(&["XMM, XMM, I8", "XMM, M128, I8", "YMM, YMM, I8", "ZMM, ZMM, I8", "XMM, XMM", "ZMM, ZMM", "YMM, M256, I8", "ZMM, M512, I8"]),
        want: 24,
    });
    buckets.push(Bucket {
        extension: "VAES",
        valid: false,
        stems: strs(&["VAESDEC", "VAESDECLAST", "VAESENC", "VAESENCLAST"]),
        forms: strs(&["YMM, YMM, YMM", "ZMM, ZMM, ZMM", "YMM, YMM, M256", "ZMM, ZMM, M512", "XMM, XMM, XMM", "XMM, XMM, M128"]),
        want: 24,
    });
    buckets.push(Bucket {
        extension: "VPCLMULQDQ",
        valid: false,
        stems: strs(&["VPCLMULQDQ_Z"]),
        forms: strs(&["YMM, YMM, YMM, I8", "ZMM, ZMM, ZMM, I8", "YMM, YMM, M256, I8", "ZMM, ZMM, M512, I8"]),
        want: 4,
    });
    buckets.push(Bucket {
        extension: "KEYLOCKER",
        valid: false,
        stems: strs(&["AESENC128KL", "AESENC256KL", "AESDEC128KL", "AESDEC256KL", "AESENCWIDE128KL", "AESDECWIDE128KL", "LOADIWKEY", "ENCODEKEY128", "ENCODEKEY256"]),
        forms: strs(&["XMM, M384", "R32, R32"]),
        want: 14,
    });
    buckets.push(Bucket {
        extension: "SGX",
        valid: false,
        stems: strs(&[
            "ENCLS_ECREATE", "ENCLS_EADD", "ENCLS_EINIT", "ENCLS_EREMOVE", "ENCLS_EDBGRD",
            "ENCLS_EDBGWR", "ENCLS_EEXTEND", "ENCLS_ELDB", "ENCLS_ELDU", "ENCLS_EBLOCK",
            "ENCLS_EPA", "ENCLS_EWB", "ENCLS_ETRACK", "ENCLS_EAUG", "ENCLS_EMODPR",
            "ENCLS_EMODT", "ENCLU_EREPORT", "ENCLU_EGETKEY", "ENCLU_EENTER", "ENCLU_ERESUME",
            "ENCLU_EEXIT", "ENCLU_EACCEPT", "ENCLU_EMODPE", "ENCLU_EACCEPTCOPY",
            "ENCLV_EDECVIRTCHILD", "ENCLV_EINCVIRTCHILD",
        ]),
        forms: strs(&[""]),
        want: 26,
    });
    buckets.push(Bucket {
        extension: "VMX",
        valid: false,
        stems: strs(&[
            "VMCALL", "VMLAUNCH", "VMRESUME", "VMXOFF", "VMXON", "VMCLEAR", "VMPTRLD",
            "VMPTRST", "VMREAD", "VMWRITE", "INVEPT", "INVVPID", "VMFUNC",
        ]),
        forms: strs(&["", "R64, R64"]),
        want: 16,
    });
    buckets.push(Bucket {
        extension: "SMX",
        valid: false,
        stems: strs(&["GETSEC_CAPABILITIES", "GETSEC_ENTERACCS", "GETSEC_EXITAC", "GETSEC_SENTER", "GETSEC_SEXIT", "GETSEC_PARAMETERS", "GETSEC_SMCTRL", "GETSEC_WAKEUP"]),
        forms: strs(&[""]),
        want: 8,
    });
    buckets.push(Bucket {
        extension: "MPX",
        valid: false,
        stems: strs(&["BNDCL", "BNDCU", "BNDCN", "BNDLDX", "BNDSTX", "BNDMK", "BNDMOV"]),
        forms: strs(&["BND, R64", "BND, M64", "M64, BND"]),
        want: 20,
    });
    buckets.push(Bucket {
        extension: "CET",
        valid: false,
        stems: strs(&[
            "INCSSPD", "INCSSPQ", "RDSSPD", "RDSSPQ", "SAVEPREVSSP", "RSTORSSP", "WRSSD",
            "WRSSQ", "WRUSSD", "WRUSSQ", "SETSSBSY", "CLRSSBSY", "ENDBR32", "ENDBR64",
        ]),
        forms: strs(&[""]),
        want: 14,
    });
    buckets.push(Bucket {
        extension: "TSXLDTRK",
        valid: false,
        stems: strs(&["XSUSLDTRK", "XRESLDTRK"]),
        forms: strs(&[""]),
        want: 2,
    });
    buckets.push(Bucket {
        extension: "WAITPKG",
        valid: false,
        stems: strs(&["UMONITOR", "UMWAIT", "TPAUSE"]),
        forms: strs(&["R64"]),
        want: 3,
    });
    buckets.push(Bucket {
        extension: "ENQCMD",
        valid: false,
        stems: strs(&["ENQCMD", "ENQCMDS"]),
        forms: strs(&["R64, M512"]),
        want: 2,
    });
    buckets.push(Bucket {
        extension: "SERIALIZE",
        valid: false,
        stems: strs(&["SERIALIZE"]),
        forms: strs(&[""]),
        want: 1,
    });
    buckets.push(Bucket {
        extension: "HRESET",
        valid: false,
        stems: strs(&["HRESET"]),
        forms: strs(&["I8"]),
        want: 1,
    });
    buckets.push(Bucket {
        extension: "UINTR",
        valid: false,
        stems: strs(&["UIRET", "CLUI", "STUI", "TESTUI", "SENDUIPI"]),
        forms: strs(&[""]),
        want: 5,
    });
    buckets.push(Bucket {
        extension: "MOVDIR",
        valid: false,
        stems: strs(&["MOVDIRI", "MOVDIR64B"]),
        forms: strs(&["M32, R32", "M64, R64"]),
        want: 4,
    });
    buckets.push(Bucket {
        extension: "PTWRITE",
        valid: false,
        stems: strs(&["PTWRITE"]),
        forms: strs(&["R32", "R64"]),
        want: 2,
    });
    buckets.push(Bucket {
        extension: "PCONFIG",
        valid: false,
        stems: strs(&["PCONFIG"]),
        forms: strs(&[""]),
        want: 1,
    });
    buckets.push(Bucket {
        extension: "SYSTEM",
        valid: false,
        stems: strs(&[
            "WRMSR", "RDMSR", "LGDT", "SGDT", "LIDT", "SIDT", "LLDT", "SLDT", "LTR", "STR",
            "CLTS", "LMSW", "SMSW", "INVD", "WBINVD", "INVLPG", "INVPCID", "HLT", "RSM",
            "IRET", "IRETQ", "SYSENTER", "SYSEXIT", "SYSCALL", "SYSRET", "SWAPGS", "CLI",
            "STI", "CLAC", "STAC", "VERR", "VERW", "LAR", "LSL", "IN", "OUT", "INSB", "INSW",
            "INSD", "OUTSB", "OUTSW", "OUTSD", "INT", "INT3", "INTO", "UD0", "UD1", "UD2",
            "MONITOR", "MWAIT", "WRPKRU", "RDPKRU", "XRSTORS", "XSAVES", "CLZERO",
        ]),
        forms: strs(&["", "R64"]),
        want: 96,
    });
    buckets.push(Bucket {
        extension: "X87_LEGACY",
        valid: false,
        stems: strs(&[
            "FDECSTP", "FINCSTP", "FFREE", "FNOP", "FNINIT", "FNCLEX", "FNSAVE", "FRSTOR",
            "FNSTENV", "FLDENV", "FNSTCW", "FLDCW", "FNSTSW", "FBLD", "FBSTP", "F2XM1",
            "FYL2X", "FYL2XP1", "FPREM", "FPREM1", "FXTRACT", "FTST",
        ]),
        forms: strs(&["", "M64"]),
        want: 30,
    });
    buckets.push(Bucket {
        extension: "3DNOW",
        valid: false,
        stems: strs(&[
            "PFADD", "PFSUB", "PFSUBR", "PFMUL", "PFRCP", "PFRSQRT", "PFACC", "PFNACC",
            "PFPNACC", "PFMAX", "PFMIN", "PFCMPEQ", "PFCMPGT", "PFCMPGE", "PF2ID", "PI2FD",
            "PF2IW", "PI2FW", "PAVGUSB", "PMULHRW",
        ]),
        forms: strs(&["MM, MM", "MM, M64"]),
        want: 40,
    });
    buckets.push(Bucket {
        extension: "XOP",
        valid: false,
        stems: strs(&[
            "VPHADDBD", "VPHADDBW", "VPHADDBQ", "VPHADDWD", "VPHADDWQ", "VPHADDDQ",
            "VPHADDUBD", "VPHADDUBW", "VPHADDUBQ", "VPHADDUWD", "VPHADDUWQ", "VPHADDUDQ",
            "VPHSUBBW", "VPHSUBWD", "VPHSUBDQ", "VFRCZPS", "VFRCZPD", "VFRCZSS", "VFRCZSD",
            "VPROTB", "VPROTW", "VPROTD", "VPROTQ", "VPSHAB", "VPSHAW", "VPSHAD", "VPSHAQ",
            "VPSHLB", "VPSHLW", "VPSHLD_X", "VPSHLQ", "VPCOMB", "VPCOMW", "VPCOMD", "VPCOMQ",
            "VPCOMUB", "VPCOMUW", "VPCOMUD", "VPCOMUQ", "VPPERM",
        ]),
        forms: strs(&["XMM, XMM, XMM", "XMM, XMM, M128", "XMM, M128, XMM", "XMM, XMM, I8"]),
        want: 160,
    });
    buckets.push(Bucket {
        extension: "FMA4",
        valid: false,
        stems: {
            let mut v = Vec::new();
            for op in ["VFMADD", "VFMSUB", "VFNMADD", "VFNMSUB"] {
                for ty in ["PS4", "PD4", "SS4", "SD4"] {
                    v.push(format!("{op}{ty}"));
                }
            }
            v.extend(strs(&["VFMADDSUBPS4", "VFMADDSUBPD4", "VFMSUBADDPS4", "VFMSUBADDPD4"]));
            v
        },
        forms: strs(&["XMM, XMM, XMM, XMM", "YMM, YMM, YMM, YMM", "XMM, XMM, M128, XMM", "XMM, XMM, XMM, M128", "YMM, YMM, M256, YMM", "YMM, YMM, YMM, M256"]),
        want: 120,
    });
    buckets.push(Bucket {
        extension: "SSE4A",
        valid: false,
        stems: strs(&["EXTRQ", "INSERTQ", "MOVNTSD", "MOVNTSS"]),
        forms: strs(&["XMM, XMM", "XMM, I8, I8", "M64, XMM"]),
        want: 12,
    });
    buckets.push(Bucket {
        extension: "TBM",
        valid: false,
        stems: strs(&["BLCFILL", "BLCI", "BLCIC", "BLCMSK", "BLCS", "BLSFILL", "BLSIC", "T1MSKC", "TZMSK"]),
        forms: strs(&["R32, R32", "R64, R64"]),
        want: 18,
    });

    // Fix the elastic buckets so the totals come out exactly.
    let fixed_valid: usize = buckets
        .iter()
        .filter(|b| b.valid && b.extension != "BASE")
        .map(|b| b.want)
        .sum();
    let fixed_invalid: usize = buckets
        .iter()
        .filter(|b| !b.valid && b.extension != "AVX512F")
        .map(|b| b.want)
        .sum();
    let base_want = VALID_INSTRUCTIONS
        .checked_sub(fixed_valid)
        .expect("valid buckets exceed target");
    let avx512f_want = (TOTAL_INSTRUCTIONS - VALID_INSTRUCTIONS)
        .checked_sub(fixed_invalid)
        .expect("invalid buckets exceed target");
    for b in &mut buckets {
        if b.extension == "BASE" {
            b.want = base_want;
        }
        if b.extension == "AVX512F" {
            b.want = avx512f_want;
        }
    }
    buckets
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

struct GeneratedInstructions {
    xml: String,
    valid_ids: Vec<String>,
    valid_extensions: Vec<String>,
}

fn generate_instructions() -> GeneratedInstructions {
    let buckets = instruction_buckets();
    let mut xml = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<root>\n");
    let mut all_asm: BTreeSet<String> = BTreeSet::new();
    let mut all_ids: BTreeSet<String> = BTreeSet::new();
    let mut valid_ids = Vec::new();
    let mut valid_extensions = Vec::new();
    let mut total = 0usize;
    let mut valid_total = 0usize;

    for bucket in &buckets {
        let entries = bucket.emit();
        assert_eq!(entries.len(), bucket.want, "bucket {}", bucket.extension);
        let _ = writeln!(xml, "  <extension name=\"{}\">", bucket.extension);
        for asm in &entries {
            assert!(all_asm.insert(asm.clone()), "duplicate asm string {asm:?}");
            let id = normalize_mnemonic(asm);
            assert!(
                all_ids.insert(id.clone()),
                "normalized id collision for {asm:?} -> {id:?}"
            );
            let _ = writeln!(
                xml,
                "    <instruction asm=\"{}\" extension=\"{}\" uops=\"1\"/>",
                xml_escape(asm),
                bucket.extension
            );
            total += 1;
            if bucket.valid && id != "nop" {
                valid_ids.push(id);
            }
            if bucket.valid {
                valid_total += 1;
            }
        }
        xml.push_str("  </extension>\n");
        if bucket.valid {
            valid_extensions.push(bucket.extension.to_string());
        }
    }
    xml.push_str("</root>\n");
    assert_eq!(total, TOTAL_INSTRUCTIONS);
    assert_eq!(valid_total, VALID_INSTRUCTIONS);
    GeneratedInstructions {
        xml,
        valid_ids,
        valid_extensions,
    }
}

struct EventSpec {
    name: String,
    category: String,
    code: u8,
    umask: u8,
    description: String,
    trigger: String, // pre-rendered JSON fragment
    speculative: bool,
    baseline: u64,
    augment: bool,
}

fn structural(kind: &str) -> String {
    format!("{{\"structural\":\"{kind}\"}}")
}

fn tagged(ids: &[String]) -> String {
    let quoted: Vec<String> = ids.iter().map(|i| format!("\"{i}\"")).collect();
    format!("{{\"instructions\":[{}]}}", quoted.join(","))
}

/// Deterministic sample without replacement from `pool`.
fn pick_ids(pool: &[String], count: usize, rng: &mut SplitMix64) -> Vec<String> {
    assert!(count <= pool.len());
    let mut chosen = BTreeSet::new();
    while chosen.len() < count {
        let idx = rng.next_below(pool.len() as u64) as usize;
        chosen.insert(pool[idx].clone());
    }
    chosen.into_iter().collect()
}

fn pick_matching(pool: &[String], pred: impl Fn(&str) -> bool, count: usize, rng: &mut SplitMix64) -> Vec<String> {
    let matching: Vec<String> = pool.iter().filter(|id| pred(id)).cloned().collect();
    if matching.len() >= count {
        pick_ids(&matching, count, rng)
    } else {
        pick_ids(pool, count, rng)
    }
}

fn generate_events(valid_ids: &[String]) -> Vec<EventSpec> {
    let mut rng = SplitMix64::new(0x5EED_CA7A_0106);
    let mut events: Vec<EventSpec> = Vec::new();
    let mut used: BTreeSet<(u8, u8)> = BTreeSet::new();
    let push = |e: EventSpec, used: &mut BTreeSet<(u8, u8)>, events: &mut Vec<EventSpec>| {
        assert!(
            used.insert((e.code, e.umask)),
            "duplicate encoding {:#x}/{:#x} for {}",
            e.code,
            e.umask,
            e.name
        );
        events.push(e);
    };

    // The three cross-architecture events shipped through the augment file.
    for (name, category, code, umask, kind, desc) in [
        (
            "BR_MISP_EXEC.ALL_BRANCHES",
            "BR_MISP_EXEC",
            0x89u8,
            0xFFu8,
            "branch_mispredicted",
            "All mispredicted near branches executed, retired or not",
        ),
        (
            "BR_MISP_EXEC.ALL_CONDITIONAL",
            "BR_MISP_EXEC",
            0x89,
            0xC1,
            "branch_mispredicted",
            "Speculative and retired mispredicted macro conditional branches",
        ),
        (
            "BR_INST_EXEC.NONTAKEN_CONDITIONAL",
            "BR_INST_EXEC",
            0x88,
            0x41,
            "branch_nontaken",
            "Not-taken macro conditional branches executed",
        ),
    ] {
        push(
            EventSpec {
                name: name.into(),
                category: category.into(),
                code,
                umask,
                description: desc.into(),
                trigger: structural(kind),
                speculative: true,
                baseline: 0,
                augment: true,
            },
            &mut used,
            &mut events,
        );
    }

    // Speculative-counted events fired by shared pipeline structures.
    for (name, category, code, umask, kind, baseline, desc) in [
        ("INT_MISC.RECOVERY_CYCLES", "INT_MISC", 0x0Du8, 0x01u8, "recovery_cycles", 0u64,
         "Core cycles the allocator is stalled recovering from an earlier clear"),
        ("INT_MISC.CLEAR_RESTEER_CYCLES", "INT_MISC", 0x0D, 0x80, "resteer_cycles", 0,
         "Cycles the issue stage waits for the front end to fetch from the resteered path"),
        ("ICACHE_64B.IFTAG_HIT", "ICACHE_64B", 0x83, 0x01, "icache_fetch_hit", 0,
         "Instruction fetch tag lookups that hit in the L1 instruction cache"),
        ("ICACHE_64B.IFTAG_STALL", "ICACHE_64B", 0x83, 0x04, "icache_fetch_stall", 0,
         "Cycles a code fetch is stalled on an L1 instruction cache tag miss"),
        ("RESOURCE_STALLS.ANY", "RESOURCE_STALLS", 0xA2, 0x01, "resource_stall_cycles", 1,
         "Resource related stall cycles"),
    ] {
        push(
            EventSpec {
                name: name.into(),
                category: category.into(),
                code,
                umask,
                description: desc.into(),
                trigger: structural(kind),
                speculative: true,
                baseline,
                augment: false,
            },
            &mut used,
            &mut events,
        );
    }

    // Speculative-counted events that need specific trigger instructions.
    let lcp_pred = |id: &str| id.ends_with("_r16_r16") || id.ends_with("_r16_i16") || id.contains("_r16");
    let mem_pred = |id: &str| id.contains("m128") || id.contains("m64") || id.contains("m256") || id.contains("mov");
    let vec_pred = |id: &str| id.starts_with('v') || id.starts_with('p');
    let x87_pred = |id: &str| id.starts_with('f');
    type TaggedSpec = (&'static str, &'static str, u8, u8, Vec<String>, u64, &'static str);
    let tagged_vuln: Vec<TaggedSpec> = vec![
        ("PARTIAL_RAT_STALLS.SCOREBOARD", "PARTIAL_RAT_STALLS", 0x59, 0x01,
         pick_matching(valid_ids, x87_pred, 30, &mut rng), 0,
         "Cycles the pipeline is stalled on serializing operations"),
        ("CYCLE_ACTIVITY.STALLS_MEM_ANY", "CYCLE_ACTIVITY", 0xA3, 0x14,
         pick_matching(valid_ids, mem_pred, 40, &mut rng), 2,
         "Execution stalls while the memory subsystem has an outstanding load"),
        ("CYCLE_ACTIVITY.CYCLES_MEM_ANY", "CYCLE_ACTIVITY", 0xA3, 0x10,
         pick_matching(valid_ids, mem_pred, 35, &mut rng), 2,
         "Cycles while the memory subsystem has an outstanding load"),
        ("CYCLE_ACTIVITY.CYCLES_L1D_MISS", "CYCLE_ACTIVITY", 0xA3, 0x08,
         pick_matching(valid_ids, mem_pred, 1, &mut rng), 2,
         "Cycles while an L1 data cache miss demand load is outstanding"),
        ("RS_EVENTS.EMPTY_CYCLES", "RS_EVENTS", 0x5E, 0x01,
         pick_matching(valid_ids, x87_pred, 30, &mut rng), 3,
         "Cycles the reservation station is empty for the thread"),
        ("ITLB_MISSES.WALK_PENDING", "ITLB_MISSES", 0x85, 0x10,
         pick_ids(valid_ids, 18, &mut rng), 0,
         "Page miss handler busy with an instruction fetch page walk"),
        ("ITLB_MISSES.MISS_CAUSES_A_WALK", "ITLB_MISSES", 0x85, 0x01,
         pick_ids(valid_ids, 8, &mut rng), 0,
         "Misses in all instruction TLB levels causing page walks"),
        ("ILD_STALL.LCP", "ILD_STALL", 0x87, 0x01,
         pick_matching(valid_ids, lcp_pred, 12, &mut rng), 0,
         "Stalls caused by changing prefix length of the instruction"),
        ("EXE_ACTIVITY.EXE_BOUND_0_PORTS", "EXE_ACTIVITY", 0xA6, 0x01,
         pick_matching(valid_ids, x87_pred, 6, &mut rng), 0,
         "Cycles where no uops were executed on any port"),
        ("IDQ.MS_CYCLES", "IDQ", 0x79, 0x30,
         pick_matching(valid_ids, vec_pred, 3, &mut rng), 0,
         "Cycles uops are delivered to the instruction decode queue from the microcode sequencer"),
        ("IDQ.MS_MITE_UOPS", "IDQ", 0x79, 0x20,
         pick_matching(valid_ids, vec_pred, 3, &mut rng), 0,
         "Uops initiated by the legacy decode pipeline while the microcode sequencer is busy"),
        ("DTLB_LOAD_MISSES.MISS_CAUSES_A_WALK", "DTLB_LOAD_MISSES", 0x08, 0x01,
         pick_matching(valid_ids, mem_pred, 3, &mut rng), 0,
         "Load misses in all data TLB levels causing page walks"),
    ];
    for (name, category, code, umask, ids, baseline, desc) in tagged_vuln {
        assert!(!ids.is_empty());
        push(
            EventSpec {
                name: name.into(),
                category: category.into(),
                code,
                umask,
                description: desc.into(),
                trigger: tagged(&ids),
                speculative: true,
                baseline,
                augment: false,
            },
            &mut used,
            &mut events,
        );
    }

    let vulnerable = events.len();
    assert_eq!(vulnerable, VULNERABLE_EVENTS);

    // Retirement-counted remainder of the catalog. Each family contributes
    // a handful of umasks; a few are instruction-tagged for realism.
    struct Family {
        category: &'static str,
        code: u8,
        kind: FamilyKind,
        baseline: u64,
        umasks: Vec<(&'static str, u8, &'static str)>,
    }
    enum FamilyKind {
        Structural(&'static str),
        Tagged(fn(&str) -> bool, usize),
    }

    let families = vec![
        Family {
            category: "INST_RETIRED", code: 0xC0, kind: FamilyKind::Structural("instructions_retired"), baseline: 0,
            umasks: vec![("ANY_P", 0x00, "Instructions retired"), ("PREC_DIST", 0x01, "Precise instructions retired"), ("NOP", 0x02, "Retired NOP instructions")],
        },
        Family {
            category: "UOPS_RETIRED", code: 0xC2, kind: FamilyKind::Structural("uops_retired"), baseline: 0,
            umasks: vec![("RETIRE_SLOTS", 0x02, "Retirement slots used"), ("TOTAL_CYCLES", 0x0A, "Cycles with retired uops"), ("STALL_CYCLES", 0x04, "Cycles without retired uops"), ("MACRO_FUSED", 0x08, "Macro-fused uops retired")],
        },
        Family {
            category: "UOPS_ISSUED", code: 0x0E, kind: FamilyKind::Structural("uops_retired"), baseline: 0,
            umasks: vec![("ANY", 0x01, "Uops issued by the rename/alloc stage"), ("STALL_CYCLES", 0x02, "Cycles no uops issued"), ("VECTOR_WIDTH_MISMATCH", 0x20, "Blend uops issued on vector width mismatch"), ("SLOW_LEA", 0x08, "Slow LEA uops issued")],
        },
        Family {
            category: "UOPS_EXECUTED", code: 0xB1, kind: FamilyKind::Structural("uops_retired"), baseline: 0,
            umasks: vec![("THREAD", 0x01, "Uops executed per thread"), ("CORE", 0x02, "Uops executed per core"), ("CYCLES_GE_1", 0x10, "Cycles with at least one executed uop"), ("STALL_CYCLES", 0x04, "Counts cycles with no executed uops"), ("X87", 0x40, "x87 uops executed")],
        },
        Family {
            category: "CPU_CLK_UNHALTED", code: 0x3C, kind: FamilyKind::Structural("cycles"), baseline: 4,
            umasks: vec![("THREAD_P", 0x00, "Thread cycles when not halted"), ("REF_XCLK", 0x01, "Reference cycles at crystal frequency"), ("ONE_THREAD_ACTIVE", 0x02, "Cycles one thread is active"), ("RING0_TRANS", 0x04, "Transitions into ring 0")],
        },
        Family {
            category: "MEM_LOAD_RETIRED", code: 0xD1, kind: FamilyKind::Structural("l1d_hit"), baseline: 0,
            umasks: vec![("L1_HIT", 0x01, "Retired load uops with L1 hits"), ("L2_HIT", 0x02, "Retired load uops with L2 hits"), ("L3_HIT", 0x04, "Retired load uops with L3 hits"), ("FB_HIT", 0x40, "Retired loads that hit the fill buffer")],
        },
        Family {
            category: "MEM_LOAD_RETIRED_MISS", code: 0xD2, kind: FamilyKind::Structural("l1d_miss"), baseline: 0,
            umasks: vec![("L1_MISS", 0x08, "Retired load uops with L1 misses"), ("L2_MISS", 0x10, "Retired load uops with L2 misses"), ("L3_MISS", 0x20, "Retired load uops with L3 misses")],
        },
        Family {
            category: "MEM_INST_RETIRED", code: 0xD0, kind: FamilyKind::Tagged(|id| id.contains("m64") || id.contains("m128") || id.contains("mov"), 25), baseline: 0,
            umasks: vec![("ALL_LOADS", 0x81, "All retired load instructions"), ("ALL_STORES", 0x82, "All retired store instructions"), ("LOCK_LOADS", 0x21, "Retired locked loads"), ("SPLIT_LOADS", 0x41, "Retired split loads"), ("SPLIT_STORES", 0x42, "Retired split stores"), ("STLB_MISS_LOADS", 0x11, "Retired loads that miss the STLB"), ("STLB_MISS_STORES", 0x12, "Retired stores that miss the STLB")],
        },
        Family {
            category: "L2_RQSTS", code: 0x24, kind: FamilyKind::Structural("l1d_miss"), baseline: 0,
            umasks: vec![("ALL_DEMAND_DATA_RD", 0xE1, "Demand data read requests to L2"), ("DEMAND_DATA_RD_HIT", 0xC1, "Demand data reads that hit L2"), ("DEMAND_DATA_RD_MISS", 0x21, "Demand data reads that miss L2"), ("ALL_RFO", 0xE2, "RFO requests to L2"), ("RFO_HIT", 0xC2, "RFO requests that hit L2"), ("RFO_MISS", 0x22, "RFO requests that miss L2"), ("ALL_CODE_RD", 0xE4, "Code read requests to L2"), ("CODE_RD_HIT", 0xC4, "Code reads that hit L2"), ("CODE_RD_MISS", 0x24, "Code reads that miss L2"), ("ALL_PF", 0xF8, "Prefetch requests to L2"), ("PF_HIT", 0xD8, "Prefetches that hit L2"), ("PF_MISS", 0x38, "Prefetches that miss L2"), ("MISS", 0x3F, "All requests that miss L2"), ("REFERENCES", 0xFF, "All L2 requests")],
        },
        Family {
            category: "LONGEST_LAT_CACHE", code: 0x2E, kind: FamilyKind::Structural("l1d_miss"), baseline: 0,
            umasks: vec![("MISS", 0x41, "Last level cache misses"), ("REFERENCE", 0x4F, "Last level cache references")],
        },
        Family {
            category: "BR_INST_RETIRED", code: 0xC4, kind: FamilyKind::Structural("branch_executed"), baseline: 0,
            umasks: vec![("ALL_BRANCHES", 0x00, "All retired branch instructions"), ("CONDITIONAL", 0x01, "Retired conditional branches"), ("NEAR_CALL", 0x02, "Retired near calls"), ("NEAR_RETURN", 0x08, "Retired near returns"), ("NEAR_TAKEN", 0x20, "Retired taken branches"), ("NOT_TAKEN", 0x10, "Retired not-taken branches"), ("FAR_BRANCH", 0x40, "Retired far branches")],
        },
        Family {
            category: "BR_MISP_RETIRED", code: 0xC5, kind: FamilyKind::Structural("branch_mispredicted"), baseline: 0,
            umasks: vec![("ALL_BRANCHES", 0x00, "All retired mispredicted branches"), ("CONDITIONAL", 0x01, "Retired mispredicted conditional branches"), ("NEAR_TAKEN", 0x20, "Retired mispredicted taken branches")],
        },
        Family {
            category: "BR_INST_EXEC", code: 0x88, kind: FamilyKind::Structural("branch_executed"), baseline: 0,
            umasks: vec![("ALL_BRANCHES", 0xFF, "All branches executed"), ("TAKEN_CONDITIONAL", 0x81, "Taken conditional branches executed"), ("ALL_CONDITIONAL", 0xC1, "All conditional branches executed"), ("ALL_DIRECT_JMP", 0x82, "Direct jumps executed")],
        },
        Family {
            category: "BR_MISP_EXEC", code: 0x89, kind: FamilyKind::Structural("branch_taken"), baseline: 0,
            umasks: vec![("TAKEN_CONDITIONAL", 0x81, "Taken speculative and retired mispredicted conditional branches")],
        },
        Family {
            category: "FP_ARITH_INST_RETIRED", code: 0xC7, kind: FamilyKind::Tagged(|id| id.starts_with('v') || id.ends_with("ps") || id.ends_with("pd") || id.ends_with("ss") || id.ends_with("sd"), 30), baseline: 0,
            umasks: vec![("SCALAR_SINGLE", 0x02, "Scalar single precision floating point arithmetic"), ("SCALAR_DOUBLE", 0x01, "Scalar double precision floating point arithmetic"), ("128B_PACKED_SINGLE", 0x08, "128-bit packed single precision arithmetic"), ("128B_PACKED_DOUBLE", 0x04, "128-bit packed double precision arithmetic"), ("256B_PACKED_SINGLE", 0x20, "256-bit packed single precision arithmetic"), ("256B_PACKED_DOUBLE", 0x10, "256-bit packed double precision arithmetic")],
        },
        Family {
            category: "MACHINE_CLEARS", code: 0xC3, kind: FamilyKind::Structural("recovery_cycles"), baseline: 0,
            umasks: vec![("COUNT", 0x01, "Machine clears of any type"), ("MEMORY_ORDERING", 0x02, "Memory ordering machine clears"), ("SMC", 0x04, "Self-modifying code machine clears"), ("FP_ASSIST", 0x08, "Floating point assists")],
        },
        Family {
            category: "DSB2MITE_SWITCHES", code: 0xAB, kind: FamilyKind::Structural("icache_fetch_stall"), baseline: 0,
            umasks: vec![("PENALTY_CYCLES", 0x02, "Decode stream buffer to legacy decode switch penalty cycles"), ("COUNT", 0x01, "Decode stream buffer to legacy decode switches")],
        },
        Family {
            category: "IDQ_UOPS_NOT_DELIVERED", code: 0x9C, kind: FamilyKind::Structural("icache_fetch_stall"), baseline: 1,
            umasks: vec![("CORE", 0x01, "Uops not delivered to the back end"), ("CYCLES_0_UOPS_DELIV_CORE", 0x02, "Cycles no uops delivered"), ("CYCLES_FE_WAS_OK", 0x04, "Cycles the front end delivered full width")],
        },
        Family {
            category: "LSD", code: 0xA8, kind: FamilyKind::Structural("uops_retired"), baseline: 0,
            umasks: vec![("UOPS", 0x01, "Uops delivered by the loop stream detector"), ("CYCLES_ACTIVE", 0x02, "Cycles the loop stream detector delivers uops"), ("CYCLES_4_UOPS", 0x04, "Cycles the loop stream detector delivers four uops")],
        },
        Family {
            category: "OFFCORE_REQUESTS", code: 0xB0, kind: FamilyKind::Structural("l1d_miss"), baseline: 0,
            umasks: vec![("ALL_DATA_RD", 0x08, "Demand and prefetch data reads to offcore"), ("DEMAND_DATA_RD", 0x01, "Demand data reads to offcore"), ("DEMAND_RFO", 0x04, "Demand RFOs to offcore"), ("ALL_REQUESTS", 0x80, "All offcore requests")],
        },
        Family {
            category: "SW_PREFETCH_ACCESS", code: 0x32, kind: FamilyKind::Tagged(|id| id.starts_with("prefetch"), 4), baseline: 0,
            umasks: vec![("T0", 0x02, "Software prefetches to L1"), ("T1_T2", 0x04, "Software prefetches to L2 and L3"), ("NTA", 0x01, "Non-temporal software prefetches"), ("PREFETCHW", 0x08, "Software prefetches for write")],
        },
        Family {
            category: "DTLB_STORE_MISSES", code: 0x49, kind: FamilyKind::Structural("l1d_miss"), baseline: 0,
            umasks: vec![("MISS_CAUSES_A_WALK", 0x01, "Store misses in all data TLB levels causing walks"), ("WALK_COMPLETED", 0x0E, "Completed store page walks"), ("STLB_HIT", 0x20, "Store misses that hit the STLB")],
        },
        Family {
            category: "PAGE_WALKER_LOADS", code: 0xBC, kind: FamilyKind::Structural("l1d_miss"), baseline: 0,
            umasks: vec![("DTLB_L1", 0x11, "Page walker loads that hit L1"), ("DTLB_L2", 0x12, "Page walker loads that hit L2"), ("DTLB_L3", 0x14, "Page walker loads that hit L3"), ("DTLB_MEMORY", 0x18, "Page walker loads from memory")],
        },
        Family {
            category: "LD_BLOCKS", code: 0x03, kind: FamilyKind::Structural("resource_stall_cycles"), baseline: 0,
            umasks: vec![("STORE_FORWARD", 0x02, "Loads blocked on a preceding store"), ("NO_SR", 0x08, "Loads blocked with no split registers available"), ("ADDR_ALIAS", 0x04, "False dependencies on partial address aliasing")],
        },
        Family {
            category: "ARITH", code: 0x14, kind: FamilyKind::Tagged(|id| id.contains("div") || id.contains("sqrt"), 12), baseline: 0,
            umasks: vec![("DIVIDER_ACTIVE", 0x01, "Cycles the divider is active"), ("FPU_DIV_ACTIVE", 0x04, "Cycles the floating point divider is active")],
        },
        Family {
            category: "EXE_ACTIVITY_SAFE", code: 0xA6, kind: FamilyKind::Structural("cycles"), baseline: 2,
            umasks: vec![("1_PORTS_UTIL", 0x02, "Cycles one port is utilized"), ("2_PORTS_UTIL", 0x04, "Cycles two ports are utilized"), ("3_PORTS_UTIL", 0x08, "Cycles three ports are utilized"), ("4_PORTS_UTIL", 0x10, "Cycles four ports are utilized"), ("BOUND_ON_STORES", 0x40, "Cycles bound on stores")],
        },
        Family {
            category: "OTHER_ASSISTS", code: 0xC1, kind: FamilyKind::Structural("recovery_cycles"), baseline: 0,
            umasks: vec![("ANY", 0x3F, "Microcode assists of any type")],
        },
        Family {
            category: "CYCLE_ACTIVITY_SAFE", code: 0xA3, kind: FamilyKind::Structural("cycles"), baseline: 2,
            umasks: vec![("CYCLES_L2_MISS", 0x01, "Cycles while an L2 miss demand load is outstanding"), ("STALLS_TOTAL", 0x04, "Total execution stall cycles"), ("STALLS_L1D_MISS", 0x0C, "Execution stalls with an outstanding L1 data miss"), ("STALLS_L2_MISS", 0x05, "Execution stalls with an outstanding L2 miss")],
        },
        Family {
            category: "ITLB", code: 0xAE, kind: FamilyKind::Structural("icache_fetch_stall"), baseline: 0,
            umasks: vec![("ITLB_FLUSH", 0x01, "Instruction TLB flushes")],
        },
        Family {
            category: "TLB_FLUSH", code: 0xBD, kind: FamilyKind::Structural("cycles"), baseline: 0,
            umasks: vec![("DTLB_THREAD", 0x01, "Data TLB flushes"), ("STLB_ANY", 0x20, "Shared TLB flushes")],
        },
        Family {
            category: "ROB_MISC_EVENTS", code: 0xCC, kind: FamilyKind::Structural("uops_retired"), baseline: 0,
            umasks: vec![("LBR_INSERTS", 0x20, "Last branch record entries inserted"), ("PAUSE_INST", 0x40, "Retired pause instructions")],
        },
        Family {
            category: "ICACHE_16B", code: 0x80, kind: FamilyKind::Structural("icache_fetch_hit"), baseline: 0,
            umasks: vec![("IFDATA_STALL", 0x04, "Cycles an instruction fetch is stalled on an L1 instruction cache miss")],
        },
        Family {
            category: "ILD_STALL_SAFE", code: 0x87, kind: FamilyKind::Structural("cycles"), baseline: 0,
            umasks: vec![("IQ_FULL", 0x04, "Stalls with the instruction queue full")],
        },
        Family {
            category: "RS_EVENTS_SAFE", code: 0x5E, kind: FamilyKind::Structural("cycles"), baseline: 2,
            umasks: vec![("EMPTY_END", 0x02, "Reservation station empty intervals ended")],
        },
        Family {
            category: "OFFCORE_REQUESTS_OUTSTANDING", code: 0x60, kind: FamilyKind::Structural("l1d_miss_cycles"), baseline: 1,
            umasks: vec![("ALL_DATA_RD", 0x08, "Outstanding offcore data read transactions per cycle"), ("CYCLES_WITH_DATA_RD", 0x01, "Cycles with outstanding offcore data reads"), ("DEMAND_RFO", 0x04, "Outstanding demand RFO transactions per cycle")],
        },
        Family {
            category: "L1D_PEND_MISS", code: 0x48, kind: FamilyKind::Structural("l1d_miss_cycles"), baseline: 1,
            umasks: vec![("PENDING", 0x01, "L1 data cache misses outstanding per cycle"), ("PENDING_CYCLES", 0x02, "Cycles with at least one outstanding L1 data miss"), ("FB_FULL", 0x04, "Cycles the fill buffer is full")],
        },
        Family {
            category: "L1D", code: 0x51, kind: FamilyKind::Structural("l1d_miss"), baseline: 0,
            umasks: vec![("REPLACEMENT", 0x01, "L1 data cache lines replaced")],
        },
        Family {
            category: "L2_TRANS", code: 0xF0, kind: FamilyKind::Structural("l1d_miss"), baseline: 0,
            umasks: vec![("ALL_REQUESTS", 0x80, "L2 cache transactions of any type"), ("L2_WB", 0x40, "L2 writebacks to L3"), ("CODE_RD", 0x04, "L2 code read transactions")],
        },
        Family {
            category: "L2_LINES_IN", code: 0xF1, kind: FamilyKind::Structural("l1d_miss"), baseline: 0,
            umasks: vec![("ALL", 0x1F, "L2 cache lines filled")],
        },
        Family {
            category: "L2_LINES_OUT", code: 0xF2, kind: FamilyKind::Structural("l1d_miss"), baseline: 0,
            umasks: vec![("SILENT", 0x01, "L2 cache lines evicted silently"), ("NON_SILENT", 0x02, "L2 cache lines evicted non-silently")],
        },
    ];

    for family in families {
        for (suffix, umask, desc) in &family.umasks {
            let trigger = match &family.kind {
                FamilyKind::Structural(kind) => structural(kind),
                FamilyKind::Tagged(pred, count) => {
                    let ids = pick_matching(valid_ids, pred, *count, &mut rng);
                    tagged(&ids)
                }
            };
            push(
                EventSpec {
                    name: format!("{}.{}", family.category, suffix),
                    category: family.category.to_string(),
                    code: family.code,
                    umask: *umask,
                    description: desc.to_string(),
                    trigger,
                    speculative: false,
                    baseline: family.baseline,
                    augment: false,
                },
                &mut used,
                &mut events,
            );
        }
    }

    // Pad to the exact base count: port-utilization events first, then
    // offcore response filters, which real catalogs carry in abundance.
    let mut port = 0u8;
    while events.len() < BASE_EVENTS + AUGMENT_EVENTS && port < 8 {
        push(
            EventSpec {
                name: format!("UOPS_DISPATCHED_PORT.PORT_{port}"),
                category: "UOPS_DISPATCHED_PORT".to_string(),
                code: 0xA1,
                umask: 1u8 << port,
                description: format!("Uops dispatched to port {port}"),
                trigger: structural("uops_retired"),
                speculative: false,
                baseline: 0,
                augment: false,
            },
            &mut used,
            &mut events,
        );
        port += 1;
    }
    let mut response = 0u8;
    while events.len() < BASE_EVENTS + AUGMENT_EVENTS {
        let (code, umask) = (0xB7 + (response / 128), response.wrapping_mul(2).wrapping_add(1));
        push(
            EventSpec {
                name: format!("OFFCORE_RESPONSE.MATCH_{response}"),
                category: "OFFCORE_RESPONSE".to_string(),
                code,
                umask,
                description: format!("Offcore response filter match {response}"),
                trigger: structural("l1d_miss"),
                speculative: false,
                baseline: 0,
                augment: false,
            },
            &mut used,
            &mut events,
        );
        response += 1;
        assert!(response < 255, "ran out of padding encodings");
    }
    assert_eq!(events.len(), BASE_EVENTS + AUGMENT_EVENTS);
    assert_eq!(events.iter().filter(|e| e.speculative).count(), VULNERABLE_EVENTS);
    assert_eq!(events.iter().filter(|e| e.augment).count(), AUGMENT_EVENTS);
    events
}

fn render_catalog(events: &[EventSpec]) -> String {
    let mut out = String::from("[\n");
    for (i, e) in events.iter().enumerate() {
        let persistence = if e.speculative {
            "speculative_counted"
        } else {
            "retirement_counted"
        };
        let _ = write!(
            out,
            "  {{\"name\":\"{}\",\"category\":\"{}\",\"event_code\":\"{:#04X}\",\"umask\":\"{:#04X}\",\"description\":\"{}\",\"trigger\":{},\"persistence\":\"{}\",\"baseline\":{}}}",
            e.name, e.category, e.code, e.umask, e.description, e.trigger, persistence, e.baseline
        );
        out.push_str(if i + 1 == events.len() { "\n" } else { ",\n" });
    }
    out.push_str("]\n");
    out
}

fn main() {
    let out_dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data"));
    std::fs::create_dir_all(&out_dir).expect("create output dir");

    let instructions = generate_instructions();
    std::fs::write(out_dir.join("instructions_sample.xml"), &instructions.xml)
        .expect("write instruction xml");

    let filter = format!(
        "{{\n  \"allow_extensions\": [{}],\n  \"deny_extensions\": [],\n  \"deny_asm\": []\n}}\n",
        instructions
            .valid_extensions
            .iter()
            .map(|e| format!("\"{e}\""))
            .collect::<Vec<_>>()
            .join(", ")
    );
    std::fs::write(out_dir.join("instruction_filter.json"), filter).expect("write filter");

    let mut events = generate_events(&instructions.valid_ids);
    let (augment, base): (Vec<EventSpec>, Vec<EventSpec>) =
        events.drain(..).partition(|e| e.augment);
    assert_eq!(base.len(), BASE_EVENTS);
    assert_eq!(augment.len(), AUGMENT_EVENTS);
    std::fs::write(out_dir.join("skylake_sample.json"), render_catalog(&base))
        .expect("write catalog");
    std::fs::write(out_dir.join("skylake_augment.json"), render_catalog(&augment))
        .expect("write augment");

    // A small worked example of the explicit mapping format.
    let vaddps = instructions
        .valid_ids
        .iter()
        .find(|id| id.starts_with("vaddps"))
        .cloned()
        .unwrap_or_else(|| instructions.valid_ids[0].clone());
    let mapping = format!(
        "{{\n  \"nop\": [],\n  \"{vaddps}\": [[\"FP_ARITH_INST_RETIRED.128B_PACKED_SINGLE\", 1]]\n}}\n"
    );
    std::fs::write(out_dir.join("mapping_example.json"), mapping).expect("write mapping");

    eprintln!(
        "wrote {} instruction records ({} valid), {} + {} events",
        TOTAL_INSTRUCTIONS,
        VALID_INSTRUCTIONS,
        BASE_EVENTS,
        AUGMENT_EVENTS
    );
}
