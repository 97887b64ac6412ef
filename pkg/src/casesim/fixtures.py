"""Deterministic synthetic labour-court corpus for desk runs and tests.

Each case belongs to one of six dispute themes; cases of the same theme
are labeled similar. Dispute sections, party statements and anonymized
entities follow the layout of real district-court judgments closely enough
for the extraction, blurring and prompt-chain code to be exercised. Canned
LLM replies are keyed by prompt hash so the chain runs offline.
"""

from __future__ import annotations

import itertools
import json
import random
from pathlib import Path

import yaml

from .classifier import BARELY_SIMILAR, NOT_SIMILAR, SIMILAR, LabeledPair, write_labeled_pairs
from .corpus import parse_document
from .llm_disputes import build_prompt, extract_party_claims, prompt_key

# each theme: dispute statements (paraphrase variants), plaintiff points, defendant points
THEMES = {
    "overtime": {
        "title": "給付加班費",
        "disputes": [
            ["原告請求被告給付自{date}起之延長工時工資，有無理由？",
             "原告{person}主張其有延長工作時間，得否請求被告給付加班費？",
             "被告是否應給付原告延長工時之加班費？"],
            ["兩造約定之月薪是否已包含加班費？", "被告抗辯月薪已含加班費用，是否可採？"],
            ["原告之加班時數應如何計算？", "原告實際延長工時之時數為何？"],
            ["被告之出勤打卡紀錄是否足以證明原告之工作時間？", "打卡紀錄能否作為原告延長工時之證明？"],
        ],
        "plaintiff": ["原告每日工作逾八小時，每週均有延長工時", "被告從未給付延長工時工資",
                      "原告之出勤紀錄可證明加班時數"],
        "defendant": ["兩造約定之月薪已包含加班費", "原告未依規定申請加班，不得請求加班費",
                      "出勤紀錄僅為到離廠時間，並非工作時間"],
    },
    "dismissal": {
        "title": "確認僱傭關係存在",
        "disputes": [
            ["被告於{date}終止兩造勞動契約是否合法？", "被告解僱原告是否符合勞動基準法之規定？"],
            ["原告請求確認兩造間僱傭關係存在，有無理由？", "兩造間之僱傭關係是否仍然存在？"],
            ["原告得否請求被告給付資遣費及預告期間工資？", "被告是否應給付原告資遣費？"],
            ["原告有無違反工作規則且情節重大之情事？", "原告{person}是否有違反勞動契約或工作規則而情節重大？"],
        ],
        "plaintiff": ["被告無故片面終止勞動契約", "原告並無任何違反工作規則之行為",
                      "兩造間僱傭關係仍然存在，被告應繼續給付薪資"],
        "defendant": ["原告多次無故曠職，情節重大", "被告依勞動基準法第十二條合法終止契約",
                      "原告已領取離職證明，兩造僱傭關係業已消滅"],
    },
    "injury": {
        "title": "職業災害補償",
        "disputes": [
            ["原告於{date}在{place}受傷是否屬職業災害？", "原告所受傷害是否為執行職務所致之職業災害？"],
            ["被告應否給付原告醫療期間之原領工資補償？", "原告請求職業災害醫療期間工資補償有無理由？"],
            ["原告請求之醫療費用及看護費用是否有據？", "原告支出之醫療費用及看護費用應否由被告負擔？"],
            ["被告就原告之傷害有無違反職業安全衛生法之過失？", "被告是否未盡提供安全衛生設備之義務？"],
        ],
        "plaintiff": ["原告於工作時遭機器夾傷右手", "被告未提供必要之安全防護設備",
                      "原告因傷無法工作，被告應補償醫療期間工資"],
        "defendant": ["原告係自行違規操作機器致傷", "被告已提供安全設備並施以教育訓練",
                      "原告已領取勞保職災給付，應予抵充"],
    },
    "leave": {
        "title": "給付特別休假工資",
        "disputes": [
            ["原告請求未休特別休假工資，有無理由？", "被告應否給付原告特別休假未休之工資？"],
            ["原告之特別休假日數應如何計算？", "原告每年得享有之特別休假日數為何？"],
            ["原告未休畢特別休假是否可歸責於被告？", "特別休假未休畢是否因被告未准許請假所致？"],
        ],
        "plaintiff": ["原告任職多年從未休畢特別休假", "被告以人力不足為由不准原告請假",
                      "被告應發給未休特別休假之工資"],
        "defendant": ["原告係自行放棄特別休假", "被告已於年度終結時結算特別休假",
                      "原告請求之特別休假日數計算有誤"],
    },
    "pension": {
        "title": "補提繳勞工退休金",
        "disputes": [
            ["被告是否有短少提繳原告之勞工退休金？", "被告有無依實際工資為原告足額提繳退休金？"],
            ["原告請求被告補提繳退休金至其個人專戶，有無理由？", "被告應否將短提之退休金補繳至原告之退休金專戶？"],
            ["被告是否以低於實際薪資之金額申報原告之勞保投保薪資？", "原告之勞保投保薪資是否以多報少？"],
        ],
        "plaintiff": ["被告以低於實際工資之金額提繳退休金", "原告之勞保投保薪資遭以多報少",
                      "被告應將短提之退休金補繳至原告專戶"],
        "defendant": ["被告係依兩造約定之薪資提繳退休金", "獎金及津貼並非經常性工資",
                      "原告請求補提繳之金額計算錯誤"],
    },
    "noncompete": {
        "title": "給付違約金",
        "disputes": [
            ["兩造間之離職後競業禁止約款是否有效？", "競業禁止條款是否合理而有效？"],
            ["原告離職後是否違反競業禁止約定？", "原告離職後在{place}任職是否違反競業禁止約定？"],
            ["被告請求之違約金是否過高而應予酌減？", "約定之違約金數額是否過高？"],
        ],
        "plaintiff": ["競業禁止條款未給予合理補償而無效", "原告離職後從事之工作與被告業務不同",
                      "違約金約定顯然過高應予酌減"],
        "defendant": ["原告離職前簽訂競業禁止同意書", "原告離職後即至同業任職並招攬客戶",
                      "違約金之約定係兩造合意，並無過高"],
    },
}

# generic points that can show up in any case
GENERIC = ["原告請求之遲延利息起算日為何？", "被告所為時效抗辯有無理由？", "原告請求之金額應如何計算？"]

COURTS = [("TPDV", "臺灣臺北地方法院"), ("PCDV", "臺灣新北地方法院"), ("TCDV", "臺灣臺中地方法院"),
          ("KSDV", "臺灣高雄地方法院"), ("TYDV", "臺灣桃園地方法院"), ("SLDV", "臺灣士林地方法院")]
SURNAMES = "王李張陳林黃吳劉蔡楊"
PLACES = ["大安醫院", "永和工廠", "中興公司", "信義診所", "東昇工廠", "大同公司"]
COMPANIES = ["宏達股份有限公司", "長興有限公司", "永盛企業股份有限公司", "富邦工業有限公司", "大成有限公司"]
JOBS = ["作業員", "業務專員", "工程師", "司機", "會計", "店長"]
HEADERS = ["本件爭點：", "兩造爭執之要點：", "本件兩造之爭點為：", "兩造爭執事項："]

N_DOCS = 60
N_LABELED = 40
OVERSIZE_INDEX = N_DOCS - 1
# (llm_a, llm_b) cases whose step-3 reply never arrives
NO_OUTPUT = {"llm_a": (44, 51), "llm_b": (47, 53)}


def _roc_date(rng: random.Random, spaced: bool) -> str:
    y, m, d = rng.randint(100, 108), rng.randint(1, 12), rng.randint(1, 28)
    return f"{y} 年 {m} 月 {d} 日" if spaced else f"{y}年{m}月{d}日"


def _fill(template: str, rng: random.Random) -> str:
    return template.format(date=_roc_date(rng, rng.random() < 0.3), place=rng.choice(PLACES),
                           person=rng.choice(SURNAMES) + "○○")


def _case_disputes(theme: dict, rng: random.Random) -> tuple[list[int], list[str]]:
    pool = theme["disputes"]
    k = rng.randint(2, len(pool))
    chosen = sorted(rng.sample(range(len(pool)), k))
    items = [_fill(rng.choice(pool[i]), rng) for i in chosen]
    if rng.random() < 0.3:
        items.insert(rng.randint(0, len(items)), rng.choice(GENERIC))
    return chosen, items


def _render_items(items: list[str], rng: random.Random) -> str:
    style = rng.choice(["paren", "arabic", "inline"])
    cn = "一二三四五六七八九"
    if style == "paren":
        return "\n".join(f"({cn[i]}){s}" for i, s in enumerate(items))
    if style == "arabic":
        return "\n".join(f"{i + 1}.{s}" for i, s in enumerate(items))
    return "".join(f"（{cn[i]}）{s}" for i, s in enumerate(items))


def _claims(theme: dict, rng: random.Random, oversize: bool) -> tuple[str, str, str]:
    job = rng.choice(JOBS)
    start = _roc_date(rng, False)
    pts = rng.sample(theme["plaintiff"], rng.randint(2, 3))
    plaintiff = (f"原告自{start}起受僱於被告，擔任{job}，月薪新臺幣{rng.randint(28, 60)},000元。"
                 + "。".join(pts) + "。爰依法提起本訴，並聲明：被告應給付原告新臺幣"
                 + f"{rng.randint(50, 900)},000元，及自起訴狀繕本送達翌日起至清償日止，按年息百分之五計算之利息。")
    if oversize:
        # a very long statement that only the larger budget accommodates
        filler = "原告另陳述工作期間之各項事實經過，詳如起訴狀所載，茲不贅述。"
        plaintiff += filler * 260
    dpts = rng.sample(theme["defendant"], rng.randint(2, 3))
    defendant = (f"被告已於{_roc_date(rng, False)}給付原告新臺幣{rng.randint(10, 99)},{rng.randint(100, 999)}元。"
                 + "。".join(dpts) + "。並聲明：原告之訴駁回。")
    return plaintiff, defendant, f"原告自{start}起受僱於被告擔任{job}"


def make_document(index: int, theme_name: str, rng: random.Random) -> tuple[dict, list[int], str]:
    theme = THEMES[theme_name]
    code, court = COURTS[index % len(COURTS)]
    jyear = 105 + index % 4
    jcase = "重勞訴" if index % 7 == 3 else "勞訴"
    jno = str(10 + index)
    month, day = rng.randint(1, 12), rng.randint(1, 28)
    jdate = f"{jyear + 1911}{month:02d}{day:02d}"
    chosen, items = _case_disputes(theme, rng)
    plaintiff, defendant, employment = _claims(theme, rng, index == OVERSIZE_INDEX)
    winner = rng.random() < 0.5
    jfull = "\n".join([
        f"{court}民事判決　　　　　　　　　{jyear}年度{jcase}字第{jno}號",
        f"原　　　告　{rng.choice(SURNAMES)}○○",
        f"被　　　告　{rng.choice(COMPANIES)}",
        f"上列當事人間請求{theme['title']}事件，本院於{jyear}年{month}月{day}日言詞辯論終結，判決如下：",
        "主　　文",
        "被告應給付原告新臺幣壹拾萬元。" if winner else "原告之訴駁回。",
        "訴訟費用由被告負擔。" if winner else "訴訟費用由原告負擔。",
        "事實及理由",
        f"一、原告主張：{plaintiff}",
        f"二、被告則以：{defendant}",
        "三、兩造不爭執之事項：",
        f"(一)原告自{_roc_date(rng, False)}起受僱於被告。",
        "(二)兩造間曾就上開事項進行勞資爭議調解，調解不成立。",
        f"四、{rng.choice(HEADERS)}",
        _render_items(items, rng),
        "五、本院之判斷：",
        "經查，原告之主張" + ("堪予採信。" if winner else "尚難採信。"),
        "六、據上論結，本件原告之訴為" + ("有理由" if winner else "無理由") + "，判決如主文。",
        f"中　　華　　民　　國　　{jyear}　　年　　{month}　　月　　{day}　　日",
    ])
    rec = {"JID": f"{code},{jyear},{jcase},{jno},{jdate},1", "JYEAR": str(jyear), "JCASE": jcase,
           "JNO": jno, "JDATE": jdate, "JTITLE": theme["title"], "JFULL": jfull}
    return rec, chosen, employment


def _llm_lists(theme: dict, chosen: list[int], employment: str, rng: random.Random, source: str):
    p_pts = [employment] + rng.sample(theme["plaintiff"], 2)
    d_pts = rng.sample(theme["defendant"], 2)
    disputes = []
    for i in chosen:
        variants = theme["disputes"][i]
        text = _fill(variants[-1] if source == "llm_b" else rng.choice(variants), rng)
        disputes.append(text)
    if source == "llm_a":
        # the looser model sometimes drops a point and adds a generic one
        if len(disputes) > 2 and rng.random() < 0.4:
            disputes.pop(rng.randrange(len(disputes)))
        if rng.random() < 0.4:
            disputes.append(rng.choice(GENERIC))
    return p_pts, d_pts, disputes


def _format_reply(key: str, items: list[str], style: str) -> str:
    if style == "json":
        return json.dumps({key: items}, ensure_ascii=False)
    if style == "pydict":
        return repr({key: items})
    return f"{key}:\n" + "\n".join(f"{i + 1}. {s}" for i, s in enumerate(items))


def build_desk_fixture(out_dir, seed: int = 20240601) -> dict:
    """Write the corpus, labeled pairs, canned LLM replies and a config file."""
    out = Path(out_dir)
    (out / "corpus").mkdir(parents=True, exist_ok=True)
    (out / "llm").mkdir(parents=True, exist_ok=True)
    rng = random.Random(seed)
    names = list(THEMES)
    docs, themes, chosen_by_case = [], {}, {}
    for i in range(N_DOCS):
        theme = names[i % len(names)]
        rec, chosen, employment = make_document(i, theme, rng)
        (out / "corpus" / f"case{i:03d}.json").write_text(
            json.dumps(rec, ensure_ascii=False, indent=1) + "\n", encoding="utf-8")
        docs.append(parse_document(json.dumps(rec, ensure_ascii=False)))
        themes[rec["JID"]] = theme
        chosen_by_case[rec["JID"]] = (chosen, employment)

    # labeled pairs over the first N_LABELED cases
    labeled_ids = [d.jid for d in docs[:N_LABELED]]
    similar, cross = [], []
    for a, b in itertools.combinations(labeled_ids, 2):
        (similar if themes[a] == themes[b] else cross).append((a, b))
    rng.shuffle(cross)
    near = {frozenset(("overtime", "leave")), frozenset(("dismissal", "noncompete"))}
    barely = [p for p in cross if frozenset((themes[p[0]], themes[p[1]])) in near][:10]
    rest = [p for p in cross if p not in barely][:2 * len(similar)]
    pairs = ([LabeledPair(a, b, SIMILAR) for a, b in similar] + [LabeledPair(a, b, NOT_SIMILAR) for a, b in rest]
             + [LabeledPair(a, b, BARELY_SIMILAR) for a, b in barely])
    rng.shuffle(pairs)
    write_labeled_pairs(out / "labeled_pairs.jsonl", pairs)
    (out / "themes.json").write_text(json.dumps(themes, ensure_ascii=False, indent=1) + "\n", encoding="utf-8")

    # canned replies, built from the claims exactly as the pipeline extracts them
    for source in ("llm_a", "llm_b"):
        records = []
        for i, doc in enumerate(docs):
            claims = extract_party_claims(doc)
            if claims is None:
                raise RuntimeError(f"fixture document {doc.jid} lacks party statements")
            theme = THEMES[themes[doc.jid]]
            p_pts, d_pts, disputes = _llm_lists(theme, *chosen_by_case[doc.jid], rng, source)
            style = "json" if source == "llm_b" else rng.choice(["json", "pydict", "bullets"])
            step1 = build_prompt(1, claims)
            step2 = build_prompt(2, claims)
            step3 = build_prompt(3, claims, (p_pts, d_pts))
            reply2 = _format_reply("d_point", d_pts, style)
            if source == "llm_a" and i % 9 == 2:
                # first answer unusable; the retry succeeds
                reply2 = ["", reply2]
            records.append({"prompt_sha256": prompt_key(step1), "reply": _format_reply("p_point", p_pts, style)})
            records.append({"prompt_sha256": prompt_key(step2), "reply": reply2})
            if i not in NO_OUTPUT[source]:
                records.append({"prompt_sha256": prompt_key(step3), "reply": _format_reply("dispute", disputes, style)})
        keys = [r["prompt_sha256"] for r in records]
        if len(set(keys)) != len(keys):
            raise RuntimeError("fixture prompts collide; canned replies would be ambiguous")
        with open(out / "llm" / f"{source}.jsonl", "w", encoding="utf-8") as fh:
            for r in records:
                fh.write(json.dumps(r, ensure_ascii=False) + "\n")

    config = {
        "corpus": "corpus",
        "labeled_pairs": "labeled_pairs.jsonl",
        "output": "out",
        "seed": 7,
        "repeats": 3,
        "image_side": 32,
        "llm": {
            "llm_a": {"model_id": "gpt-3.5-turbo", "temperature": 0.7, "token_budget": 11500, "max_retries": 3,
                      "provider": {"kind": "canned", "path": "llm/llm_a.jsonl"}},
            "llm_b": {"model_id": "gpt-4-0613", "temperature": 0.3, "token_budget": 6000, "max_retries": 3,
                      "provider": {"kind": "canned", "path": "llm/llm_b.jsonl"}},
        },
        "backends": {"lf": {"kind": "hash", "dims": 128}, "rob": {"kind": "hash", "dims": 128}},
        "clustering": {"min_cluster_size": 10, "epsilon_fraction": 0.8},
        "finetune": {"min_cluster_size": 5, "per_category": 2000},
        "train": {"max_epochs": 30, "patience": 8},
    }
    (out / "config.yaml").write_text(yaml.safe_dump(config, allow_unicode=True, sort_keys=False), encoding="utf-8")
    return {"documents": N_DOCS, "labeled_pairs": len(pairs), "similar": len(similar),
            "not_similar": len(rest), "barely_similar": len(barely), "themes": themes}


def main(argv=None) -> None:
    import argparse

    ap = argparse.ArgumentParser(description="write the synthetic desk fixture")
    ap.add_argument("out_dir")
    ap.add_argument("--seed", type=int, default=20240601)
    args = ap.parse_args(argv)
    info = build_desk_fixture(args.out_dir, args.seed)
    print(json.dumps({k: v for k, v in info.items() if k != "themes"}))


if __name__ == "__main__":
    main()
