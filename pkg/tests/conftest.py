"""Shared fixtures: a 20-record corpus that walks every pipeline branch.

The corpus, the offline client fixtures, and the expected outcome per
record are all declared here. Expected values were worked out by hand
from the resolution rules before the pipeline ran them.
"""

from __future__ import annotations

import csv
import json
import zipfile
from dataclasses import dataclass
from pathlib import Path

import pytest

from vulnwp.bootstrap import SimulatedClock
from vulnwp.config import GeneratorConfig
from vulnwp.corpus import Corpus, load_corpus
from vulnwp.pipeline import PipelineServices
from vulnwp.resolvers import (
    DiskSvnMirror,
    FixtureLinkDownloader,
    FixtureTagIndex,
    SourceClients,
)
from vulnwp.versions import FixtureCpeDictionary

REGISTRY_TAGS = [
    "2.9.2",
    "3.0",
    "3.1.0",
    "4.6",
    "4.7.0",
    "4.7.1",
    "5.0",
    "latest",
    "5.0-php7.2-apache",
    "cli",
]

CPE_FIXTURE = {
    "CVE-2017-5487": ["cpe:2.3:a:wordpress:wordpress:4.7:*:*:*:*:*:*:*"],
    "CVE-2015-9999": [
        "cpe:2.3:a:quiz-maker:quiz-maker:2.1:*:*:*:*:*:*:*",
        "cpe:2.3:a:quiz-maker:quiz-maker:*:*:*:*:*:*:*:*",
    ],
}

_HEADER = "# Exploit Title: {title}\n# Date: {date}\n# Exploit Author: {author}\n"

# id: (title, date, codes, extra poc lines, app zip content or "corrupt")
E2E_RECORDS = {
    101: ("WordPress Core < 4.7.1 - Content Injection", "2017-02-01", "", [], None),
    102: ("WordPress Core 2.0 - Admin Takeover", "2005-08-09", "", [], None),
    103: (
        "WordPress Plugin Quiz Master 7.1.3 - SQL Injection",
        "2018-06-12",
        "",
        ["# Software Link: https://wordpress.org/plugins/quiz-master/"],
        None,
    ),
    104: (
        "WordPress Plugin Form Builder 3.2 - Cross-Site Scripting",
        "2019-01-15",
        "",
        ["# Software Link: https://downloads.example.test/form-builder-3.2.zip"],
        None,
    ),
    105: (
        "WordPress Plugin Photo Album 2.8 - Arbitrary File Upload",
        "2012-03-20",
        "",
        [],
        {"photo-album/photo-album.php": "<?php // gallery loader\n"},
    ),
    106: ("WordPress Plugin Ghost Cart 1.2 - SQL Injection", "2016-10-05", "", [], None),
    107: ("Joomla Component Acme Shop 1.0 - Remote Code Execution", "2015-04-18", "", [], None),
    108: ("WordPress Core - Denial of Service", "2014-07-22", "", [], None),
    109: (
        "WordPress Plugin Event Calendar - Stored Cross-Site Scripting",
        "2013-09-30",
        "",
        ["# Version: 2.0.1"],
        None,
    ),
    110: (
        "WordPress Plugin News Ticker - SQL Injection",
        "2017-11-08",
        "",
        ["", "Affected Version: <= 3.4", "Tested against a default install."],
        None,
    ),
    111: (
        "WordPress Theme Clean Portfolio 1.4 - Arbitrary File Upload",
        "2014-02-14",
        "",
        [],
        None,
    ),
    112: (
        "WordPress 4.7.0/4.7.1 - Unauthenticated Content Injection",
        "2017-02-03",
        "",
        [],
        None,
    ),
    113: ("WordPress Core - User Enumeration", "2017-05-20", "CVE-2017-5487", [], None),
    114: (
        "WordPress Plugin Quiz Maker - Blind SQL Injection",
        "2015-12-01",
        "CVE-2015-9999",
        [],
        None,
    ),
    115: (
        "WordPress Plugin Old Gallery 0.9 - Remote Code Execution",
        "2011-06-17",
        "",
        ["# Software Link: https://market.example.test/old-gallery"],
        None,
    ),
    116: (
        "WordPress Plugin Broken Archive 1.0 - Local File Inclusion",
        "2018-08-25",
        "",
        [],
        "corrupt",
    ),
    117: ("WordPress Core 3.0 - SQL Injection", "2010-09-10", "", [], None),
    118: (
        "WordPress Plugin Easy Poll - Cross-Site Request Forgery",
        "2016-03-12",
        "",
        [],
        {"easy-poll/easy-poll.php": "<?php // poll widget\n"},
    ),
    119: (
        "WordPress Core 2.5 - Cross-Site Scripting",
        "2008-04-28",
        "",
        [],
        {"core-poc/readme.txt": "legacy proof of concept\n"},
    ),
    120: (
        "WordPress Plugin Site Importer < 2.0 - Remote Code Execution",
        "2019-07-04",
        "",
        [],
        {"site-importer/site-importer.php": "<?php // importer\n"},
    ),
}

SVN_FIXTURE = {
    "plugins/quiz-master/tags/7.1.3/quiz-master.php": "<?php // quiz master 7.1.3\n",
    "plugins/quiz-master/tags/7.1.3/readme.txt": "Stable tag: 7.1.3\n",
    "plugins/event-calendar/tags/2.0.1/event-calendar.php": "<?php // calendar 2.0.1\n",
    "plugins/news-ticker/tags/3.4/news-ticker.php": "<?php // ticker 3.4\n",
    "plugins/quiz-maker/tags/2.1/quiz-maker.php": "<?php // quiz maker 2.1\n",
    "plugins/easy-poll/trunk/easy-poll.php": "<?php // poll trunk\n",
    "themes/clean-portfolio/tags/1.4/style.css": "/* Theme Name: Clean Portfolio */\n",
    "themes/clean-portfolio/tags/1.4/index.php": "<?php // portfolio\n",
}

LINK_FIXTURE = {
    "https://downloads.example.test/form-builder-3.2.zip": {
        "form-builder/form-builder.php": "<?php // form builder 3.2\n",
        "form-builder/readme.txt": "Stable tag: 3.2\n",
    },
}

# Hand-computed per-record expectations: status, failure reason, image,
# component source kinds.
E2E_EXPECTED = {
    101: ("success", None, "wordpress:4.7.0", ()),
    102: ("failure", "no-image", None, ()),
    103: ("success", None, "wordpress:5.0", ("svn-repo",)),
    104: ("success", None, "wordpress:5.0", ("software-link",)),
    105: ("success", None, "wordpress:5.0", ("exploitdb-app",)),
    106: ("failure", "no-vulnerable-application", None, ()),
    107: ("failure", "unparsable-title", None, ()),
    108: ("failure", "unknown-version", None, ()),
    109: ("success", None, "wordpress:5.0", ("svn-repo",)),
    110: ("success", None, "wordpress:5.0", ("svn-repo",)),
    111: ("success", None, "wordpress:5.0", ("svn-repo",)),
    112: ("success", None, "wordpress:4.7.1", ()),
    113: ("success", None, "wordpress:4.7.0", ()),
    114: ("success", None, "wordpress:5.0", ("svn-repo",)),
    115: ("failure", "no-vulnerable-application", None, ()),
    116: ("failure", "fetch-failure", None, ()),
    117: ("failure", "no-image", None, ()),
    118: ("success", None, "wordpress:5.0", ("svn-repo",)),
    119: ("failure", "no-image", None, ()),
    120: ("success", None, "wordpress:5.0", ("exploitdb-app",)),
}

E2E_SUCCESS_COUNT = 12
E2E_BY_SOURCE = {"svn-repo": 6, "software-link": 1, "exploitdb-app": 2}
E2E_BY_REASON = {
    "no-image": 3,
    "no-vulnerable-application": 2,
    "unparsable-title": 1,
    "unknown-version": 1,
    "fetch-failure": 1,
}


def make_record(
    edb_id: int = 9000,
    title: str = "WordPress Plugin Sample 1.0 - SQL Injection",
    poc_text: str = "",
    header: dict[str, str] | None = None,
    cve_ids: tuple[str, ...] = (),
    app_archive: Path | None = None,
    published: "date | None" = None,
):
    """Build an ExploitRecord without going through the CSV loader."""
    from datetime import date as _date

    from vulnwp.corpus import ExploitRecord

    return ExploitRecord(
        edb_id=edb_id,
        title=title,
        author="test-author",
        vuln_type="webapps",
        published=published or _date(2017, 6, 1),
        platform="php",
        cve_ids=cve_ids,
        poc_text=poc_text,
        poc_header=dict(header or {}),
        app_archive=app_archive,
    )


def write_zip(path: Path, files: dict[str, str]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(path, "w") as bundle:
        for name, content in sorted(files.items()):
            bundle.writestr(name, content)


def build_corpus_tree(root: Path) -> Path:
    """Lay the 20-record corpus out on disk; returns the corpus dir."""
    corpus_dir = root / "corpus"
    (corpus_dir / "exploits").mkdir(parents=True)
    rows = []
    for edb_id, (title, published, codes, extra, app) in sorted(E2E_RECORDS.items()):
        rel = f"exploits/{edb_id}.txt"
        poc = _HEADER.format(title=title, date=published, author="test-author")
        poc += "\n".join(extra)
        poc += "\n\n<?php // proof of concept body\n"
        (corpus_dir / rel).write_text(poc, encoding="utf-8")
        if app == "corrupt":
            archive = corpus_dir / "apps" / f"{edb_id}.zip"
            archive.parent.mkdir(parents=True, exist_ok=True)
            archive.write_bytes(b"this is not a zip archive")
        elif isinstance(app, dict):
            write_zip(corpus_dir / "apps" / f"{edb_id}.zip", app)
        rows.append(
            {
                "id": edb_id,
                "file": rel,
                "description": title,
                "date": published,
                "author": "test-author",
                "type": "webapps",
                "platform": "php",
                "codes": codes,
            }
        )
    with (corpus_dir / "files_exploits.csv").open("w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(
            handle, fieldnames=["id", "file", "description", "date", "author", "type", "platform", "codes"]
        )
        writer.writeheader()
        writer.writerows(rows)
    return corpus_dir


def build_fixture_tree(root: Path) -> Path:
    """Lay the offline client fixtures out on disk; returns the dir."""
    fixtures = root / "fixtures"
    fixtures.mkdir(parents=True, exist_ok=True)
    (fixtures / "registry_tags.json").write_text(json.dumps(REGISTRY_TAGS), encoding="utf-8")
    (fixtures / "cpe_dictionary.json").write_text(json.dumps(CPE_FIXTURE), encoding="utf-8")
    for rel, content in SVN_FIXTURE.items():
        target = fixtures / "svn" / rel
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(content, encoding="utf-8")
    links = {}
    for url, files in LINK_FIXTURE.items():
        rel = f"links/{url.rsplit('/', 1)[-1]}"
        write_zip(fixtures / rel, files)
        links[url] = rel
    (fixtures / "links.json").write_text(json.dumps(links), encoding="utf-8")
    return fixtures


@dataclass
class E2ETree:
    corpus_dir: Path
    fixtures_dir: Path

    def load(self) -> Corpus:
        return load_corpus(self.corpus_dir / "files_exploits.csv", self.corpus_dir)

    def services(self, out_dir: Path, work_dir: Path, clock=None) -> PipelineServices:
        fixtures = self.fixtures_dir
        links = json.loads((fixtures / "links.json").read_text(encoding="utf-8"))
        return PipelineServices(
            registry=FixtureTagIndex.from_json(fixtures / "registry_tags.json"),
            sources=SourceClients(
                svn=DiskSvnMirror(fixtures / "svn" / "plugins", fixtures / "svn" / "themes"),
                link=FixtureLinkDownloader({url: fixtures / rel for url, rel in links.items()}),
            ),
            out_dir=out_dir,
            work_dir=work_dir,
            cpe=FixtureCpeDictionary(fixtures / "cpe_dictionary.json"),
            config=GeneratorConfig(),
            clock=clock or SimulatedClock(),
        )


@pytest.fixture(scope="session")
def e2e_tree(tmp_path_factory) -> E2ETree:
    root = tmp_path_factory.mktemp("e2e")
    return E2ETree(corpus_dir=build_corpus_tree(root), fixtures_dir=build_fixture_tree(root))


@pytest.fixture()
def e2e_corpus(e2e_tree) -> Corpus:
    return e2e_tree.load()
