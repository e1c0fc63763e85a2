#!/usr/bin/env python3
"""Generate the shared test fixtures under fixtures/.

This script is an independent oracle: prompt goldens are assembled from the
baseline prompts and step instructions as printed in the source document, and pair ids
are recomputed here from their definition, without calling the Rust code.
Hand-counted expectations are written literally, never computed by running
the pipeline.
"""

import hashlib
import json
import random
import re
import unicodedata
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
FIX = ROOT / "fixtures"
SOURCE = (ROOT / "paper.md").read_text(encoding="utf-8")

LETTERS = "ABCD"
OPTIONS = {"A": "不存在歧视", "B": "歧视女性", "C": "歧视男性", "D": "反对歧视"}
STEP_NAMES = ["识别明示刺激", "激活语境假设", "解释语言线索", "解读字面意义", "推导隐含前提", "得出隐含结论"]


def normalize(s):
    s = unicodedata.normalize("NFC", s)
    s = "".join(c for c in s if c.isspace() or unicodedata.category(c) != "Cc")
    return " ".join(s.split())


def pair_id(ctx, comment):
    data = normalize(ctx).encode() + b"\x00" + normalize(comment).encode()
    return hashlib.sha256(data).hexdigest()[:16]


def write_jsonl(path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        if header is not None:
            f.write(json.dumps(header, ensure_ascii=False, separators=(",", ":")) + "\n")
        for r in rows:
            f.write(json.dumps(r, ensure_ascii=False, separators=(",", ":")) + "\n")


def pair(ctx, comment, keyword="彩礼", platform="Weibo"):
    ctx, comment = normalize(ctx), normalize(comment)
    return {"pair_id": pair_id(ctx, comment), "context": ctx, "comment": comment,
            "keyword": keyword, "platform": platform}


def annotated(p, a, b=None):
    b = a if b is None else b
    full = a == b
    return {**p, "final_label": a if full else None,
            "annotator_labels": [{"annotator": "ann1", "label": a}, {"annotator": "ann2", "label": b}],
            "agreement": "Full" if full else "Disagree"}


# ---------------------------------------------------------------- source text

def source_zero_shot():
    m = re.search(r'f"(.*?)\\end\{CJK\}', SOURCE)
    return m.group(1).strip()


def source_cot_tail():
    start = SOURCE.index("\\textit{Zero-shot} + \\begin{CJK}{UTF8}{gbsn}")
    body = SOURCE[start:].split("\n", 1)
    first = body[0].split("{gbsn}", 1)[1].strip()
    lines = [first]
    blocks, cur = [], []
    for raw in body[1].split("\n"):
        end = "\\end{CJK}" in raw
        line = raw.replace("\\end{CJK}", "").rstrip()
        brk = line.endswith("\\\\")
        line = line[:-2].rstrip() if brk else line.rstrip()
        if line:
            cur.append(line)
        if (brk or end) and cur:
            blocks.append("\n".join(cur))
            cur = []
        if end:
            break
    return lines[0] + "\n" + "\n\n".join(blocks), len(blocks)


def source_steps():
    steps = re.findall(r"Step \d & \\shortstack\[l\]\{\\begin\{CJK\}\{UTF8\}\{gbsn\}(.*?)\\end\{CJK\}", SOURCE)
    return [s.strip() for s in steps]


def exemplar_chain_section():
    sec = SOURCE[SOURCE.index("\\label{sec:appendix C}"):SOURCE.index("\\label{sec:appendix D}")]
    posts = [p.strip().replace("\\#", "#") for p in re.findall(r"Post: (.*?)\n", sec)]
    comments = [c.replace("\\end{CJK}", "").replace("\\\\", "").strip() for c in re.findall(r"Comment: (.*?)\n", sec)]
    return list(zip(posts, comments))


def published_worked_traces():
    sec = SOURCE[SOURCE.index("\\label{sec:appendix D}"):SOURCE.index("\\label{sec:appendix E}")]
    parts = re.split(r"\\subsection\{(.*?)\}", sec)
    out = {}
    for name, body in zip(parts[1::2], parts[2::2]):
        body = body.split("{gbsn}", 1)[1].split("\\end{CJK}", 1)[0]
        body = body.replace("\\noindent ", "").replace("\\\\", "")
        lines = [l.rstrip() for l in body.strip().split("\n")]
        out[name] = "\n".join(lines).strip() + "\n"
    return out


# ---------------------------------------------------------------- exemplars

def ex(ctx, comment, steps, answer, author="ann1"):
    ctx, comment = normalize(ctx), normalize(comment)
    return {"pair_id": pair_id(ctx, comment), "context": ctx, "comment": comment,
            "steps": [s if isinstance(s, list) else [s] for s in steps],
            "final_answer": answer, "author": author}


CHAIN_SECTION = exemplar_chain_section()
TAGS = ["nontoxicA", "womenB", "menC", "antiD"]
GOLD = dict(zip(TAGS, "ABCD"))

POOL = [
    ex(CHAIN_SECTION[1][0], CHAIN_SECTION[1][1], [
        "评论者用“40万”和“冰柜”回应发帖人女朋友要用一年积蓄买戒指的帖子。",
        "发帖人认为女朋友索要昂贵戒指不合理；网络上常有把尸体藏进冰柜的社会新闻。",
        ["“40万”指发帖人一年的积蓄，也就是戒指的价格", "“冰柜”让人联想到杀人后藏尸于冰柜的新闻"],
        "与其花40万买戒指，不如买一个好一点的冰柜。",
        "索要钱财的女朋友应该被杀掉并藏进冰柜。",
        "评论以暴力方式威胁和贬低女性。",
    ], "B"),
    ex(CHAIN_SECTION[2][0], CHAIN_SECTION[2][1], [
        "评论者用“幽我一默”和“腩”回应关于男人做饭的帖子。",
        "帖子讨论“男人不会做饭”的说法与厨师多为男性的现实。",
        ["“幽我一默”是“幽默一下”的戏谑拆分", "“腩”与“男”谐音，也指牛腩这种食材"],
        "男人生来就是为了给我带来乐子的吗？",
        "男性只是供人取乐、可以被下锅的食材。",
        "评论把男性物化为娱乐工具。",
    ], "C", "ann2"),
    ex(CHAIN_SECTION[3][0], CHAIN_SECTION[3][1], [
        "评论者指出“制造对立的是重男轻女的人”。",
        "帖子借考上北大一事讨论重男轻女的长辈与性别对立。",
        "“重男轻女”指偏爱男孩、轻视女孩的观念。",
        "制造性别对立的是持有重男轻女观念的人，而不是把它说出来的人。",
        "揭露性别歧视并不等于制造性别对立。",
        "评论批评重男轻女的观念。",
    ], "D"),
    ex("相亲对象说她年薪比我高。", "女人赚得多有什么用，最后还不是要回家带孩子。", [
        "评论者用“最后还不是要回家带孩子”回应相亲帖子。",
        "帖子提到女方收入高于男方。",
        "“回家带孩子”指女性放弃工作、专职照顾家庭。",
        "女人收入再高也没有用，终究要回家带孩子。",
        "女性的价值只在于家庭和生育。",
        "评论否定女性的职业价值。",
    ], "B", "ann2"),
    ex("男朋友说他这个月工资全交给我了。", "男人嘛，提款机而已，还要什么自我。", [
        "评论者用“提款机”形容交工资的男朋友。",
        "帖子讲男朋友把工资交给女朋友。",
        "“提款机”比喻只负责提供金钱的人。",
        "男人不过是提款机，不需要有自我。",
        "男性的价值只在于提供金钱。",
        "评论把男性贬低为赚钱工具。",
    ], "C"),
]


def shot(e):
    def render(step):
        entries = [s.strip() for s in step if s.strip()]
        if len(entries) == 1:
            return entries[0]
        return "；".join(f"（{i + 1}）{s}" for i, s in enumerate(entries))
    ans = e["final_answer"]
    return "\n".join([
        f"帖子：{e['context']}", f"评论：{e['comment']}",
        f"1. {render(e['steps'][2])}", f"2. {render(e['steps'][3])}",
        f"3. {render(e['steps'][4])}", f"4. {render(e['steps'][5])}",
        f"5. {ans.lower()}.{OPTIONS[ans]}",
    ]), render


def shots_for(target_id, k):
    pool = sorted((e for e in POOL if e["pair_id"] != target_id), key=lambda e: e["pair_id"])
    return pool[:k]


def goldens():
    zero_t = source_zero_shot()
    cot_tail, n_blocks = source_cot_tail()
    assert n_blocks == 7, n_blocks
    steps = source_steps()
    assert len(steps) == 5, steps
    out = {}
    for tag, (ctx, comment) in zip(TAGS, CHAIN_SECTION):
        ctx, comment = normalize(ctx), normalize(comment)
        pid = pair_id(ctx, comment)
        zero = zero_t.replace("{context}", ctx).replace("{comment}", comment)
        step_instr = zero + "\n请按照以下步骤回答：\n" + "\n".join(f"{i + 1}. {s}" for i, s in enumerate(steps))
        out[f"zero_shot_{tag}"] = zero
        out[f"cot_{tag}"] = zero + "\n" + cot_tail
        out[f"pic_one_shot_{tag}"] = zero + "\n例如：\n" + shot(shots_for(pid, 1)[0])[0]
        out[f"pic_step_instructions_{tag}"] = step_instr
        out[f"pic_steps_plus_shots_{tag}"] = step_instr + "\n例如：\n" + "\n\n".join(shot(e)[0] for e in shots_for(pid, 3))
    own = POOL[0]
    _, render = shot(own)
    ctx, comment = own["context"], own["comment"]
    zero = zero_t.replace("{context}", ctx).replace("{comment}", comment)
    for k in range(1, 7):
        lines = [f"步骤{i + 1}（{STEP_NAMES[i]}）：{render(own['steps'][i])}" for i in range(k)]
        if k == 6:
            lines.append(f"答案：{own['final_answer'].lower()}.{OPTIONS[own['final_answer']]}")
        out[f"ablation_k{k}_womenB"] = zero + "\n推理过程：\n" + "\n".join(lines)
    return out


# ---------------------------------------------------------------- corpus

def raw_small():
    d = "2024-07-19"

    def item(i, kw, post, comment, platform="Weibo"):
        return {"source_id": f"s{i:02d}", "platform": platform, "keyword": kw,
                "post_text": post, "comment_text": comment, "fetched_at": d}

    rows = [
        item(1, "彩礼", "男方家里拿不出彩礼怎么办？", "那就别结了呗"),
        item(2, "剩女", "三十岁还没结婚就是剩女吗", "年龄不是问题"),
        item(3, "穿搭", "今天的ootd分享", "好好看，求链接", "RedNote"),
        item(4, "老公", "我老公今天做了一桌菜", "别人家的老公"),
        item(5, "博士", "女博士找对象难吗", "第三种性别又来了"),
        item(6, "身材", "健身一年的身材变化", "腰臀比绝了", "RedNote"),
        item(7, "出轨", "发现男朋友出轨了", "早分早超生"),
        item(8, "性别对立", "为什么网上性别对立这么严重", "流量密码罢了"),
        item(9, "彩礼", "男方家里拿不出彩礼怎么办？", "那就别结了呗   "),
        item(10, "剩女", "三十岁还没结婚就是剩女吗", "年龄不是问题"),
        item(11, "照片", "晒一下今天拍的照片", "😂😂😂"),
        item(12, "照片", "晒一下今天拍的照片", "[图片]"),
        item(13, "素颜", "素颜出门被夸了", "[doge] 👍"),
        item(14, "男朋友", "男朋友不让我穿吊带", "cnm，什么玩意"),
        item(15, "吊带", "穿吊带上班合适吗", "CNM 真离谱"),
        item(16, "不存在的词", "随便一个帖子", "随便一个评论"),
        item(17, "魅力", "男人的魅力在哪里", "   "),
        None,
        item(19, "微胖", "微胖女生穿搭", "哈哈😂", "RedNote"),
        item(20, "彩礼", "男方家里拿不出彩礼怎么办？", "彩礼本来就不合理"),
    ]
    path = FIX / "corpus" / "raw_small.jsonl"
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        for r in rows:
            if r is None:
                f.write('{"source_id": "s18", "platform": "Weibo", broken\n')
            else:
                f.write(json.dumps(r, ensure_ascii=False) + "\n")
    expected = {
        "lines": 20,
        "accepted": 17,
        "rejected_lines": [16, 17, 18],
        "nonverbal": 3,
        "explicit": 2,
        "dedup": 2,
        "output": 10,
        "explicit_terms": {"cnm": 2},
    }
    (FIX / "corpus" / "raw_small.expected.json").write_text(
        json.dumps(expected, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")


def reference_stats():
    rng = random.Random(3097)
    labels = ["A"] * 2148 + ["B"] * 682 + ["C"] * 193 + ["D"] * 74
    rng.shuffle(labels)
    rows = []
    for i, lab in enumerate(labels):
        rows.append(annotated(pair(f"参考语境{i:04d}", f"参考评论{i:04d}"), lab))
    for j in range(903):
        a = LETTERS[j % 4]
        b = LETTERS[(j + 1 + j // 4 % 3) % 4]
        rows.append(annotated(pair(f"分歧语境{j:04d}", f"分歧评论{j:04d}"), a, b))
    rng.shuffle(rows)
    write_jsonl(FIX / "corpus" / "reference_stats.jsonl",
                {"schema": "pic.annotated-pairs", "version": 1}, rows)


SYN_CONTEXTS = [
    ("彩礼", "男方家里拿不出彩礼，女方要求十八万八。"),
    ("剩女", "三十二岁还没结婚，被亲戚叫剩女。"),
    ("博士", "女博士毕业后找工作被问婚育计划。"),
    ("老公", "老公下班回家就打游戏，从不做家务。"),
    ("穿搭", "夏天穿吊带上班被同事议论。"),
    ("搞事业", "辞职创业一年，终于拿到第一笔投资。"),
    ("身材", "健身半年，腰臀比明显改善。"),
    ("男朋友", "男朋友说女生就该温柔一点。"),
]
SYN_COMMENTS = {
    "A": ["祝福你，加油！", "这个要看两个人怎么商量。", "我觉得挺好的，各过各的生活。", "收藏了，学到了。"],
    "B": ["女人读那么多书有什么用，还不是要嫁人。", "女司机又来了。", "长得好看就是资本呗。", "这种女的娶回家就是扶贫。"],
    "C": ["男人的嘴骗人的鬼。", "男人嘛，提款机而已。", "普信男又在发言了。"],
    "D": ["性别不该成为评价一个人的标准。", "凭什么女生就该温柔？尊重是相互的。"],
}


def synthetic_100():
    rng = random.Random(100)
    labels = ["A"] * 60 + ["B"] * 22 + ["C"] * 12 + ["D"] * 6
    rng.shuffle(labels)
    rows = []
    for i, lab in enumerate(labels):
        kw, ctx = SYN_CONTEXTS[i % len(SYN_CONTEXTS)]
        comment = SYN_COMMENTS[lab][i % len(SYN_COMMENTS[lab])]
        rows.append(annotated(pair(f"{ctx}（#{i:03d}）", comment, kw), lab))
    write_jsonl(FIX / "corpus" / "synthetic_100.jsonl",
                {"schema": "pic.annotated-pairs", "version": 1}, rows)


def chains_20():
    rows, chains = [], []
    for i in range(20):
        lab = "B" if i % 3 else "C"
        ctx, comment = f"链条帖子{i:02d}：讨论婚恋中的分工。", f"链条评论{i:02d}：你们懂的。"
        p = pair(ctx, comment, "性别")
        rows.append(annotated(p, lab))
        chains.append(ex(ctx, comment, [f"第{i:02d}条链，步骤{k}的内容。" for k in range(1, 7)], lab))
    for j in range(5):
        ctx, comment = f"无链条帖子{j}", f"无链条评论{j}"
        rows.append(annotated(pair(ctx, comment, "性别"), "B"))
        if j == 0:
            steps = [f"残缺链条步骤{k}" for k in range(1, 6)] + [""]
            chains.append(ex(ctx, comment, steps, "B"))
    write_jsonl(FIX / "runner" / "chains_20.jsonl", {"schema": "pic.annotated-pairs", "version": 1}, rows)
    write_jsonl(FIX / "runner" / "chains_20_exemplars.jsonl", {"schema": "pic.exemplars", "version": 1}, chains)


# ---------------------------------------------------------------- parser traces

TRACES = [
    ("答案：B", "B"),
    ("B", "B"),
    ("c", "C"),
    ("D.", "D"),
    ("A.不存在歧视", "A"),
    ("B.歧视女性", "B"),
    ("C. 歧视男性", "C"),
    ("d.反对歧视", "D"),
    ("答案是C。", "C"),
    ("我的答案是：A", "A"),
    ("选B", "B"),
    ("我选择 D 选项。", "D"),
    ("正确选项：C", "C"),
    ("回答：B.歧视女性", "B"),
    ("**答案：A. 不存在歧视**", "A"),
    ("答案：**C**", "C"),
    ("这个评论属于：B.歧视女性", "B"),
    ("在这个语境下，评论属于 D.反对歧视。", "D"),
    ("Answer: D", "D"),
    ("The answer is (B).", "B"),
    ("Answer: c. men-targeted toxicity", "C"),
    ("5. Answer: b. women-targeted toxicity", "B"),
    ("The comment is non-toxic, so the answer is A.", "A"),
    ("选项：A", "A"),
    ("应该选C，因为评论在调侃男性。", "C"),
    ("该评论不存在歧视。", "A"),
    ("这条评论属于歧视女性的情况。", "B"),
    ("评论明显是在歧视男性。", "C"),
    ("评论者是在反对歧视。", "D"),
    ("这个评论没有歧视女性，而是反对歧视。", "D"),
    ("A.不存在歧视 B.歧视女性 C.歧视男性 D.反对歧视\n我认为答案是B", "B"),
    ("A.不存在歧视 B.歧视女性 C.歧视男性 D.反对歧视\n\nC", "C"),
    ("选项有A.不存在歧视、B.歧视女性、C.歧视男性、D.反对歧视。综合来看，应该是 d.反对歧视", "D"),
    ("1. 评论中的“冰柜”暗示暴力。\n2. 字面意思是买冰柜比买戒指好。\n3. 评论暗示女性应被伤害。\n4. 含有性别歧视。\n5. b.歧视女性", "B"),
    ("1. 没有比喻。\n2. 评论表示祝福。\n3. 没有\n4. 不含性别歧视。\n5. a.不存在歧视", "A"),
    ("1. “提款机”比喻男性只负责出钱。\n2. 男人只是提款机。\n3. 把男性物化。\n4. 含有性别歧视。\n5. C", "C"),
    ("1. 评论批评重男轻女。\n2. 字面意思是制造对立的是重男轻女的人。\n3. 没有\n4. 评论反对性别歧视。\n5. 回答选项：D", "D"),
    ("步骤1：解释比喻……\n步骤2：解释字面意思……\n步骤3：没有\n步骤4：不含歧视\n步骤5：A", "A"),
    ("让我们一步一步思考。帖子讲的是彩礼，评论在调侃女方。所以答案是 b。", "B"),
    ("问题: 这个评论属于哪种情况？\n答案: 评论贬低男性。所以答案是 c。", "C"),
    ("我倾向于C，因为评论暗示男性只是娱乐工具。", "C"),
    ("最终答案：D（反对歧视）", "D"),
    ("【答案】B", "B"),
    ("答案：「A」", "A"),
    ("答案为：c.歧视男性", "C"),
    ("综上所述，选 B。", "B"),
    ("Ｂ．歧视女性", "B"),
    ("答案：Ｄ", "D"),
    ("这条评论是对女性的歧视，属于歧视女性。答案：B", "B"),
    ("评论虽然提到了男性，但并不存在歧视。", "A"),
    ("评论表面上在夸女性，实际上在歧视女性。", "B"),
    ("I think the comment opposes discrimination. Option D.", "D"),
    ("Choice: A", "A"),
    ("The best option is C. men-targeted toxicity.", "C"),
    ("我无法判断这个评论。", None),
    ("这取决于具体语境，无法给出答案。", None),
    ("可能是a也可能是b", None),
    ("", None),
    ("既有歧视女性的成分，也有歧视男性的成分。", None),
    ("抱歉，我不能回答这个问题。", None),
    ("请提供更多信息。", None),
    ("评论提到了GPT和AI，但和性别无关", None),
    ("答案：A\n\n更正：答案：C", "C"),
    ("首先排除A和D。最终答案：B", "B"),
]


def traces():
    tdir = FIX / "traces"
    tdir.mkdir(parents=True, exist_ok=True)
    for old in tdir.glob("*"):
        old.unlink()
    for i, (text, label) in enumerate(TRACES):
        (tdir / f"t{i:03d}.txt").write_text(text, encoding="utf-8")
        (tdir / f"t{i:03d}.label").write_text((label or "none") + "\n", encoding="utf-8")
    ddir = FIX / "worked_traces"
    ddir.mkdir(parents=True, exist_ok=True)
    expected = {"CoT": "D", "PIC one-shot": "A", "PIC step instructions": "C"}
    names = {"CoT": "cot", "PIC one-shot": "pic_one_shot", "PIC step instructions": "pic_step_instructions"}
    found = published_worked_traces()
    assert set(found) == set(expected), found.keys()
    for name, text in found.items():
        (ddir / f"{names[name]}.txt").write_text(text, encoding="utf-8")
        (ddir / f"{names[name]}.label").write_text(expected[name] + "\n", encoding="utf-8")


# ---------------------------------------------------------------- metrics

PUBLISHED_ACCURACY = """\
method,GPT-4o,Llama-3.1,DeepSeek-v2.5
zero_shot,63.95,55.03,44.97
cot,58.46,47.00,51.61
pic_one_shot,69.56,51.26,55.00
pic_step_instructions,76.21,68.82,64.88
pic_steps_plus_shots:3,74.21,53.84,71.01
"""

PUBLISHED_AVERAGES = {"zero_shot": "54.65", "cot": "52.36", "pic_one_shot": "58.61",
                   "pic_step_instructions": "69.97", "pic_steps_plus_shots:3": "66.35"}


def metrics():
    mdir = FIX / "metrics"
    mdir.mkdir(parents=True, exist_ok=True)
    (mdir / "published_accuracy.csv").write_text(PUBLISHED_ACCURACY, encoding="utf-8")
    (mdir / "published_averages.json").write_text(json.dumps(PUBLISHED_AVERAGES, indent=2) + "\n", encoding="utf-8")


def main():
    raw_small()
    reference_stats()
    synthetic_100()
    chains_20()
    write_jsonl(FIX / "exemplars" / "pool.jsonl", {"schema": "pic.exemplars", "version": 1}, POOL)
    write_jsonl(FIX / "prompts" / "pairs.jsonl", {"schema": "pic.pairs", "version": 1},
                [dict(pair(c, m), tag=t) for t, (c, m) in zip(TAGS, CHAIN_SECTION)])
    gdir = FIX / "prompts" / "golden"
    gdir.mkdir(parents=True, exist_ok=True)
    for old in gdir.glob("*.txt"):
        old.unlink()
    for name, text in goldens().items():
        (gdir / f"{name}.txt").write_text(text, encoding="utf-8")
    traces()
    metrics()


if __name__ == "__main__":
    main()
