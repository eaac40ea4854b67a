// Command-line driver for the emscripten build of pdfTeX shipped by the
// `pdftex.js` npm package.  Accepts a pdflatex-like argument subset:
//   node pdftex_node.js --pdftex-dir=DIR [-output-directory=OUT] [-jobname=NAME] file.tex
// Exit status is pdfTeX's own (nonzero on TeX errors).
'use strict';
const fs = require('fs'), path = require('path'), vm = require('vm');

let outDir = null, jobname = null, texFile = null;
let dir = process.env.PDFTEX_JS_DIR || null;
for (const a of process.argv.slice(2)) {
  if (a.startsWith('--pdftex-dir=')) dir = a.slice('--pdftex-dir='.length);
  else if (a.startsWith('-output-directory=')) outDir = a.slice('-output-directory='.length);
  else if (a.startsWith('-jobname=')) jobname = a.slice('-jobname='.length);
  else if (!a.startsWith('-')) texFile = a;
}
if (!dir || !texFile) {
  process.stderr.write('usage: pdftex_node.js --pdftex-dir=DIR [-output-directory=OUT] file.tex\n');
  process.exit(2);
}
dir = path.resolve(dir);
texFile = path.resolve(texFile);
outDir = path.resolve(outDir || path.dirname(texFile));
jobname = jobname || path.basename(texFile, '.tex');
const source = fs.readFileSync(texFile, 'utf8');

const realExit = process.exit.bind(process);
let flushed = false;
function flush(status) {
  if (!flushed) {
    flushed = true;
    for (const ext of ['pdf', 'log', 'aux']) {
      try {
        fs.writeFileSync(path.join(outDir, jobname + '.' + ext), FS.readFile('/input.' + ext));
      } catch (e) { /* artifact not produced */ }
    }
  }
  realExit(status);
}
process.exit = (code) => flush(code || 0);

// the worker script expects a browser worker scope
global.location = { pathname: dir + '/pdftex-worker.js', origin: 'file://' };
global.XMLHttpRequest = class {
  open(method, url) { this.url = url; }
  send() {
    const b = fs.readFileSync(path.join(dir, path.basename(decodeURIComponent(this.url))));
    this.response = b.buffer.slice(b.byteOffset, b.byteOffset + b.byteLength);
    this.status = 200;
    setImmediate(() => this.onload({}));
  }
};
global.addEventListener = () => {};
global.postMessage = (m) => {
  if (m.type === 'log' || m.type === 'err') process.stdout.write(m.value + '\n');
  else if (m.type === 'ready') {
    FS.writeFile('/input.tex', source);
    shouldRunNow = true;
    Module.calledRun = false;
    let status = 0;
    try {
      Module.run(['-interaction=nonstopmode', '-output-format', 'pdf', 'input.tex']);
    } catch (e) {
      status = (e && typeof e.status === 'number') ? e.status : 1;
    }
    flush(status);
  }
};
global.require = require;
process.chdir(dir);
vm.runInThisContext(fs.readFileSync(path.join(dir, 'pdftex-worker.js'), 'utf8'), { filename: 'pdftex-worker.js' });
