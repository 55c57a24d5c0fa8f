(function() { 
  var topbar = document. querySelector('#header[data-sigil = "MTopBlueBarHeader"]'); 
  topbar.setAttribute('style', 'display:none');
})()
